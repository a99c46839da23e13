#include "dula/dataset.hpp"
#include "dula/error.hpp"
#include "dula/kinematics.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace dula;

namespace {

constexpr double kPi = std::numbers::pi;

Posture random_posture(Rng& rng) { return sample_posture(rng); }

}  // namespace

TEST_CASE("zero posture: hand hangs straight below the shoulder") {
    BodyDimensions d;
    d.torso = d.upper_arm = d.forearm = d.hand = 1.0;
    d.shoulder_offset = {0.0, -1.0, 0.0};
    const HandPose p = forward_kinematics(Posture{}, d);
    CHECK(p.position.isApprox(Eigen::Vector3d(0.0, -1.0, 1.0 - 3.0), 1e-15));
    CHECK(p.orientation.angularDistance(Eigen::Quaterniond::Identity()) < 1e-12);
}

TEST_CASE("elbow at 90 degrees: two hand-composed transforms") {
    // Shoulder at (0, -0.2, 0.5), elbow 0.3 below it; the elbow turns the forearm
    // by pi/2 about -y, which maps -z (down) onto +x (forward).
    const BodyDimensions d;
    Posture q;
    q[Joint::elbow_flexion] = kPi / 2;
    const HandPose p = forward_kinematics(q, d);
    const Eigen::Vector3d elbow(0.0, -0.2, 0.5 - 0.3);
    const Eigen::Vector3d expected = elbow + Eigen::Vector3d(0.27 + 0.10, 0.0, 0.0);
    CHECK((p.position - expected).norm() < 1e-12);
    const Eigen::Quaterniond r(std::cos(kPi / 4), 0.0, -std::sin(kPi / 4), 0.0);
    CHECK(p.orientation.angularDistance(r) < 1e-12);
}

TEST_CASE("axial rotation is 2pi periodic") {
    Rng rng(3);
    const Posture q = random_posture(rng);
    Posture q2 = q;
    q2[Joint::torso_axial_rotation] += 2 * kPi;
    const HandPose a = forward_kinematics(q), b = forward_kinematics(q2);
    CHECK((a.position - b.position).norm() < 1e-9);
    CHECK(a.orientation.angularDistance(b.orientation) < 1e-9);
}

TEST_CASE("non-finite angle is rejected") {
    Posture q;
    q[Joint::wrist_flexion] = std::nan("");
    CHECK_THROWS_AS(forward_kinematics(q), InvalidInput);
    CHECK_THROWS_AS(fk_jacobian(q), InvalidInput);
}

TEST_CASE("jacobian matches central differences over 1000 postures") {
    Rng rng(11);
    const double h = 1e-6;
    double worst = 0.0;
    for (int n = 0; n < 1000; ++n) {
        const Posture q = random_posture(rng);
        const FkJacobian jac = fk_jacobian(q);
        for (std::size_t i = 0; i < kNumJoints; ++i) {
            Posture qp = q, qm = q;
            qp[i] += h;
            qm[i] -= h;
            const HandPose pp = forward_kinematics(qp), pm = forward_kinematics(qm);
            const Eigen::Vector3d dv = (pp.position - pm.position) / (2 * h);
            // Angular velocity from the relative rotation R(q+h) R(q-h)^T.
            const Eigen::AngleAxisd aa(pp.orientation * pm.orientation.conjugate());
            const Eigen::Vector3d dw = aa.angle() * aa.axis() / (2 * h);
            const int c = static_cast<int>(i);
            worst = std::max(worst, (jac.block<3, 1>(0, c) - dv).cwiseAbs().maxCoeff());
            worst = std::max(worst, (jac.block<3, 1>(3, c) - dw).cwiseAbs().maxCoeff());
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("jacobian columns follow the revolute formula") {
    Rng rng(5);
    const Posture q = random_posture(rng);
    const FkJacobian jac = fk_jacobian(q);
    // Wrist deviation is the last joint: moment arm is the hand segment, perpendicular to its axis.
    const Eigen::Vector3d w = jac.block<3, 1>(3, 9);
    const Eigen::Vector3d v = jac.block<3, 1>(0, 9);
    CHECK(std::abs(w.norm() - 1.0) < 1e-12);
    CHECK(std::abs(v.dot(w)) < 1e-12);
    CHECK(std::abs(v.norm() - 0.10) < 1e-12);
}

TEST_CASE("zero posture: angular columns are the joint axes") {
    const FkJacobian jac = fk_jacobian(Posture{});
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        const Eigen::Vector3d axis = joint_axis(static_cast<Joint>(i));
        CHECK((jac.block<3, 1>(3, static_cast<int>(i)) - axis).norm() < 1e-15);
    }
}

TEST_CASE("clamp_to_limits") {
    const JointLimits lim = JointLimits::anatomical();
    Posture q;
    q[Joint::elbow_flexion] = 0.3;
    CHECK(clamp_to_limits(q, lim) == q);

    Posture out = q;
    out[Joint::shoulder_flexion] = lim.upper[3] + 0.5;
    out[Joint::wrist_deviation] = lim.lower[9] - 2.0;
    const Posture c = clamp_to_limits(out, lim);
    CHECK(c[Joint::shoulder_flexion] == lim.upper[3]);
    CHECK(c[Joint::wrist_deviation] == lim.lower[9]);
    CHECK(clamp_to_limits(c, lim) == c);
    CHECK(lim.contains(c));
}

TEST_CASE("limits validation") {
    JointLimits lim = JointLimits::anatomical();
    CHECK_NOTHROW(lim.validate());
    lim.lower[2] = 0.1;
    CHECK_THROWS_AS(lim.validate(), InvalidInput);
    lim = JointLimits::anatomical();
    lim.upper[4] = lim.lower[4];
    CHECK_THROWS_AS(lim.validate(), InvalidInput);
}

TEST_CASE("pose error is zero only at the same pose") {
    Rng rng(8);
    const HandPose a = forward_kinematics(random_posture(rng));
    const HandPose b = forward_kinematics(random_posture(rng));
    const PoseWeights w;
    CHECK(pose_error(a, a, w) < 1e-14);
    CHECK(pose_error(a, b, w) > 0.0);

    HandPose flipped = a;
    flipped.orientation.coeffs() = -a.orientation.coeffs();  // same rotation
    CHECK(pose_error(a, flipped, w) < 1e-14);

    HandPose shifted = a;
    shifted.position.x() += 0.01;
    CHECK(pose_error(a, shifted, w) == doctest::Approx(1e-4).epsilon(1e-9));
}

TEST_CASE("pose residual squares to the pose error") {
    Rng rng(9);
    const PoseWeights w{2.0, 0.3};
    for (int n = 0; n < 50; ++n) {
        const HandPose a = forward_kinematics(random_posture(rng));
        const HandPose b = forward_kinematics(random_posture(rng));
        const auto r = pose_residual(a, b, w);
        CHECK(r.squaredNorm() == doctest::Approx(pose_error(a, b, w)).epsilon(1e-10));
    }
}
