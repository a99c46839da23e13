#include "dula/kinematics.hpp"

#include "dula/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dula {

namespace {

constexpr double deg(double d) { return d * std::numbers::pi / 180.0; }

constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "torso_flexion",     "torso_lateral_bend", "torso_axial_rotation", "shoulder_flexion",
    "shoulder_abduction", "shoulder_rotation", "elbow_flexion",        "forearm_pronation",
    "wrist_flexion",     "wrist_deviation",
};

void require_finite(const Posture& q) {
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        if (!std::isfinite(q.angles[i])) {
            throw InvalidInput("posture angle " + std::string(kJointNames[i]) + " is not finite");
        }
    }
}

// Rigid offset applied after joint i (in the frame rotated by joint i).
Eigen::Vector3d link_offset(std::size_t i, const BodyDimensions& d) {
    switch (static_cast<Joint>(i)) {
        case Joint::torso_axial_rotation:
            return Eigen::Vector3d(0.0, 0.0, d.torso) + d.shoulder_offset;
        case Joint::shoulder_rotation:
            return {0.0, 0.0, -d.upper_arm};
        case Joint::forearm_pronation:
            return {0.0, 0.0, -d.forearm};
        case Joint::wrist_deviation:
            return {0.0, 0.0, -d.hand};
        default:
            return Eigen::Vector3d::Zero();
    }
}

struct ChainState {
    std::array<Eigen::Vector3d, kNumJoints> origin;  // joint origins, base frame
    std::array<Eigen::Vector3d, kNumJoints> axis;    // joint axes, base frame
    Eigen::Vector3d hand_position;
    Eigen::Matrix3d hand_rotation;
};

ChainState walk_chain(const Posture& q, const BodyDimensions& dims) {
    ChainState s;
    Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
    Eigen::Vector3d pos = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        const Eigen::Vector3d local_axis = joint_axis(static_cast<Joint>(i));
        s.origin[i] = pos;
        s.axis[i] = rot * local_axis;
        rot = rot * Eigen::AngleAxisd(q.angles[i], local_axis).toRotationMatrix();
        pos += rot * link_offset(i, dims);
    }
    s.hand_position = pos;
    s.hand_rotation = rot;
    return s;
}

}  // namespace

std::string_view joint_name(Joint j) { return kJointNames[static_cast<std::size_t>(j)]; }

double Posture::degrees(Joint j) const { return (*this)[j] * 180.0 / std::numbers::pi; }

bool Posture::is_finite() const {
    for (double a : angles) {
        if (!std::isfinite(a)) return false;
    }
    return true;
}

JointVector Posture::as_vector() const {
    return Eigen::Map<const JointVector>(angles.data());
}

Posture Posture::from_vector(const JointVector& v) {
    Posture q;
    Eigen::Map<JointVector>(q.angles.data()) = v;
    return q;
}

JointLimits JointLimits::anatomical() {
    // Degrees; static box approximation of the human range of motion.
    return JointLimits{
        .lower = {deg(-30), deg(-40), deg(-45), deg(-60), deg(-30), deg(-90), deg(-10), deg(-90),
                  deg(-70), deg(-30)},
        .upper = {deg(90), deg(40), deg(45), deg(180), deg(150), deg(90), deg(150), deg(90), deg(80),
                  deg(30)},
    };
}

void JointLimits::validate() const {
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i])) {
            throw InvalidInput("joint limits for " + std::string(kJointNames[i]) +
                               " must satisfy lower < upper");
        }
        if (!(lower[i] < 0.0 && 0.0 < upper[i])) {
            throw InvalidInput("zero posture must lie strictly inside the limits of " +
                               std::string(kJointNames[i]));
        }
    }
}

bool JointLimits::contains(const Posture& q) const {
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        if (!(q.angles[i] >= lower[i] && q.angles[i] <= upper[i])) return false;
    }
    return true;
}

void BodyDimensions::validate() const {
    if (!(torso > 0 && upper_arm > 0 && forearm > 0 && hand > 0)) {
        throw InvalidInput("segment lengths must be strictly positive");
    }
    if (!shoulder_offset.allFinite()) throw InvalidInput("shoulder offset must be finite");
}

Eigen::Vector3d joint_axis(Joint j) {
    switch (j) {
        case Joint::torso_flexion:
            return Eigen::Vector3d::UnitY();
        case Joint::torso_lateral_bend:
            return Eigen::Vector3d::UnitX();
        case Joint::torso_axial_rotation:
            return Eigen::Vector3d::UnitZ();
        case Joint::shoulder_flexion:
            return -Eigen::Vector3d::UnitY();
        case Joint::shoulder_abduction:
            return -Eigen::Vector3d::UnitX();
        case Joint::shoulder_rotation:
            return Eigen::Vector3d::UnitZ();
        case Joint::elbow_flexion:
            return -Eigen::Vector3d::UnitY();
        case Joint::forearm_pronation:
            return Eigen::Vector3d::UnitZ();
        case Joint::wrist_flexion:
            return -Eigen::Vector3d::UnitY();
        case Joint::wrist_deviation:
            return Eigen::Vector3d::UnitX();
    }
    return Eigen::Vector3d::Zero();
}

HandPose forward_kinematics(const Posture& q, const BodyDimensions& dims) {
    require_finite(q);
    const ChainState s = walk_chain(q, dims);
    HandPose pose;
    pose.position = s.hand_position;
    pose.orientation = Eigen::Quaterniond(s.hand_rotation).normalized();
    return pose;
}

FkJacobian fk_jacobian(const Posture& q, const BodyDimensions& dims) {
    require_finite(q);
    const ChainState s = walk_chain(q, dims);
    FkJacobian jac;
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        const int c = static_cast<int>(i);
        jac.block<3, 1>(0, c) = s.axis[i].cross(s.hand_position - s.origin[i]);
        jac.block<3, 1>(3, c) = s.axis[i];
    }
    return jac;
}

Posture clamp_to_limits(const Posture& q, const JointLimits& lim) {
    Posture out = q;
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        out.angles[i] = std::clamp(q.angles[i], lim.lower[i], lim.upper[i]);
    }
    return out;
}

double orientation_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
    const double d = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
    return 2.0 * std::acos(d);
}

double pose_error(const HandPose& a, const HandPose& b, const PoseWeights& w) {
    const double dp = (a.position - b.position).squaredNorm();
    const double th = orientation_distance(a.orientation, b.orientation);
    return w.position * dp + w.orientation * th * th;
}

Eigen::Matrix<double, 6, 1> pose_residual(const HandPose& current, const HandPose& target,
                                          const PoseWeights& w) {
    Eigen::Matrix<double, 6, 1> r;
    r.head<3>() = std::sqrt(w.position) * (current.position - target.position);
    Eigen::Quaterniond delta = current.orientation * target.orientation.conjugate();
    if (delta.w() < 0) delta.coeffs() = -delta.coeffs();
    const Eigen::AngleAxisd aa(delta.normalized());
    r.tail<3>() = std::sqrt(w.orientation) * aa.angle() * aa.axis();
    return r;
}

FkJacobian pose_residual_jacobian(const Posture& q, const BodyDimensions& dims,
                                  const PoseWeights& w) {
    FkJacobian jac = fk_jacobian(q, dims);
    jac.topRows<3>() *= std::sqrt(w.position);
    jac.bottomRows<3>() *= std::sqrt(w.orientation);
    return jac;
}

}  // namespace dula
