#pragma once

#include "dula/kinematics.hpp"

#include <array>
#include <cstdint>
#include <string_view>

namespace dula {

enum class LoadMode : std::uint8_t { intermittent = 0, static_or_repeated = 1, shock = 2 };

std::string_view load_mode_name(LoadMode m);
LoadMode parse_load_mode(std::string_view s);

/// Non-postural worksheet inputs.
struct TaskContext {
    bool arm_static_or_repeated = false;
    bool body_static_or_repeated = false;
    double arm_load_kg = 0.0;
    LoadMode arm_load_mode = LoadMode::intermittent;
    double body_load_kg = 0.0;
    LoadMode body_load_mode = LoadMode::intermittent;
    double neck_angle_deg = 0.0;  // + flexion, - extension
    bool neck_twist = false;
    bool neck_side_bend = false;
    bool legs_and_feet_supported = true;
    bool arm_supported_or_leaning = false;
    bool shoulder_raised = false;
    bool working_across_midline = false;
    bool wrist_bent_from_midline = false;

    /// Throws InvalidInput on negative/non-finite loads or neck angle outside [-90, 90].
    void validate() const;

    friend bool operator==(const TaskContext&, const TaskContext&) = default;
};

/// Angle thresholds (degrees) for adjustments the worksheet states only qualitatively.
struct RulaThresholds {
    double shoulder_abduction = 20.0;
    double wrist_twist = 60.0;
    double trunk_twist = 15.0;
    double trunk_side_bend = 15.0;
    double wrist_deviation = 10.0;
    // Width of the "neutral" wrist band and the "upright" trunk band.
    double wrist_neutral = 5.0;
    double trunk_upright = 5.0;
};

struct RulaBreakdown {
    int upper_arm = 0;
    int lower_arm = 0;
    int wrist = 0;
    int wrist_twist = 0;
    int table_a = 0;
    int muscle_a = 0;
    int force_a = 0;
    int score_c = 0;
    int neck = 0;
    int trunk = 0;
    int legs = 0;
    int table_b = 0;
    int muscle_b = 0;
    int force_b = 0;
    int score_d = 0;
    int grand = 0;

    friend bool operator==(const RulaBreakdown&, const RulaBreakdown&) = default;
};

int upper_arm_score(const Posture& q, const TaskContext& ctx, const RulaThresholds& th = {});
int lower_arm_score(const Posture& q, const TaskContext& ctx, const RulaThresholds& th = {});
int wrist_score(const Posture& q, const TaskContext& ctx, const RulaThresholds& th = {});
int wrist_twist_score(const Posture& q, const RulaThresholds& th = {});
int neck_score(const TaskContext& ctx);
int trunk_score(const Posture& q, const TaskContext& ctx, const RulaThresholds& th = {});
int legs_score(const TaskContext& ctx);
int muscle_use_score(bool static_or_repeated);
int force_load_score(double load_kg, LoadMode mode);

RulaBreakdown rula(const Posture& q, const TaskContext& ctx, const RulaThresholds& th = {});

/// Worksheet lookup tables. Indices are 1-based scores as printed on the worksheet.
namespace rula_tables {

inline constexpr int kUpperArm = 6, kLowerArm = 3, kWrist = 4, kWristTwist = 2;
inline constexpr int kNeck = 6, kTrunk = 6, kLegs = 2;
inline constexpr int kScoreC = 8, kScoreD = 7;

using TableA = int[kUpperArm][kLowerArm][kWrist][kWristTwist];
using TableB = int[kNeck][kTrunk][kLegs];
using TableC = int[kScoreC][kScoreD];

const TableA& table_a();
const TableB& table_b();
const TableC& table_c();

int lookup_a(int upper_arm, int lower_arm, int wrist, int wrist_twist);
int lookup_b(int neck, int trunk, int legs);
/// Clamps score_c to 8 and score_d to 7 before lookup.
int lookup_c(int score_c, int score_d);

}  // namespace rula_tables

}  // namespace dula
