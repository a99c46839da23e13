#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <string_view>

namespace dula {

inline constexpr std::size_t kNumJoints = 10;

/// Joint order of the upper-body model: three torso joints then seven right-arm joints.
enum class Joint : std::size_t {
    torso_flexion = 0,
    torso_lateral_bend,
    torso_axial_rotation,
    shoulder_flexion,
    shoulder_abduction,
    shoulder_rotation,
    elbow_flexion,
    forearm_pronation,
    wrist_flexion,
    wrist_deviation,
};

std::string_view joint_name(Joint j);

using JointVector = Eigen::Matrix<double, kNumJoints, 1>;

/// Ten joint angles in radians.
struct Posture {
    std::array<double, kNumJoints> angles{};

    double& operator[](Joint j) { return angles[static_cast<std::size_t>(j)]; }
    double operator[](Joint j) const { return angles[static_cast<std::size_t>(j)]; }
    double& operator[](std::size_t i) { return angles[i]; }
    double operator[](std::size_t i) const { return angles[i]; }

    double degrees(Joint j) const;
    bool is_finite() const;

    JointVector as_vector() const;
    static Posture from_vector(const JointVector& v);

    friend bool operator==(const Posture&, const Posture&) = default;
};

/// Box range of motion. Anatomical defaults live in `JointLimits::anatomical()`.
struct JointLimits {
    std::array<double, kNumJoints> lower{};
    std::array<double, kNumJoints> upper{};

    static JointLimits anatomical();

    /// Throws InvalidInput unless lower < upper everywhere and zero is strictly interior.
    void validate() const;
    bool contains(const Posture& q) const;
    double midpoint(std::size_t i) const { return 0.5 * (lower[i] + upper[i]); }
    double span(std::size_t i) const { return upper[i] - lower[i]; }

    friend bool operator==(const JointLimits&, const JointLimits&) = default;
};

/// Segment lengths in meters. The shoulder offset is expressed in the torso-top frame.
struct BodyDimensions {
    double torso = 0.50;
    double upper_arm = 0.30;
    double forearm = 0.27;
    double hand = 0.10;
    Eigen::Vector3d shoulder_offset{0.0, -0.20, 0.0};

    void validate() const;
};

struct HandPose {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
};

using FkJacobian = Eigen::Matrix<double, 6, static_cast<int>(kNumJoints)>;

/// Joint axis of `j` expressed in the joint's own (parent-attached) frame.
Eigen::Vector3d joint_axis(Joint j);

/// Pose of the hand frame in the pelvis-fixed base frame (x forward, y left, z up).
HandPose forward_kinematics(const Posture& q, const BodyDimensions& dims = {});

/// Rows 0-2: linear velocity of the hand origin; rows 3-5: angular velocity, both in base frame.
FkJacobian fk_jacobian(const Posture& q, const BodyDimensions& dims = {});

Posture clamp_to_limits(const Posture& q, const JointLimits& lim);

/// Geodesic angle between two orientations, in [0, pi].
double orientation_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

/// Scalar weights of the pose metric ||x - y||^2_Sigma.
struct PoseWeights {
    double position = 1.0;     // m^-2
    double orientation = 0.1;  // rad^-2
};

/// w_p * |dp|^2 + w_o * angle^2.
double pose_error(const HandPose& a, const HandPose& b, const PoseWeights& w);

/// Weighted 6-vector whose squared norm is `pose_error(target, fk(q))`:
/// [sqrt(w_p) (p(q) - p_target); sqrt(w_o) * rotation vector of R(q) R_target^T].
Eigen::Matrix<double, 6, 1> pose_residual(const HandPose& current, const HandPose& target,
                                          const PoseWeights& w);

/// Jacobian of `pose_residual` w.r.t. q, with the orientation block linearized at zero error.
FkJacobian pose_residual_jacobian(const Posture& q, const BodyDimensions& dims,
                                  const PoseWeights& w);

}  // namespace dula
