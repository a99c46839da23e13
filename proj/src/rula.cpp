#include "dula/rula.hpp"

#include "dula/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dula {

namespace rula_tables {

// Transcribed from the RULA employee assessment worksheet (McAtamney & Corlett,
// "RULA: a survey method for the investigation of work-related upper limb
// disorders", Applied Ergonomics 24(2), 1993, Tables A, B and C).
// tests/test_rula.cpp pins a checksum of every entry.

// [upper_arm][lower_arm][wrist][wrist_twist]
constexpr TableA kTableA = {
    {{{1, 2}, {2, 2}, {2, 3}, {3, 3}}, {{2, 2}, {2, 2}, {3, 3}, {3, 3}}, {{2, 3}, {3, 3}, {3, 3}, {4, 4}}},
    {{{2, 3}, {3, 3}, {3, 4}, {4, 4}}, {{3, 3}, {3, 3}, {3, 4}, {4, 4}}, {{3, 4}, {4, 4}, {4, 4}, {5, 5}}},
    {{{3, 3}, {4, 4}, {4, 4}, {5, 5}}, {{3, 4}, {4, 4}, {4, 4}, {5, 5}}, {{4, 4}, {4, 4}, {4, 5}, {5, 5}}},
    {{{4, 4}, {4, 4}, {4, 5}, {5, 5}}, {{4, 4}, {4, 4}, {4, 5}, {5, 5}}, {{4, 4}, {4, 5}, {5, 5}, {6, 6}}},
    {{{5, 5}, {5, 5}, {5, 6}, {6, 7}}, {{5, 6}, {6, 6}, {6, 7}, {7, 7}}, {{6, 6}, {6, 7}, {7, 7}, {7, 8}}},
    {{{7, 7}, {7, 7}, {7, 8}, {8, 9}}, {{8, 8}, {8, 8}, {8, 9}, {9, 9}}, {{9, 9}, {9, 9}, {9, 9}, {9, 9}}},
};

// [neck][trunk][legs]
constexpr TableB kTableB = {
    {{1, 3}, {2, 3}, {3, 4}, {5, 5}, {6, 6}, {7, 7}},
    {{2, 3}, {2, 3}, {4, 5}, {5, 5}, {6, 7}, {7, 7}},
    {{3, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 7}},
    {{5, 5}, {5, 6}, {6, 7}, {7, 7}, {7, 7}, {8, 8}},
    {{7, 7}, {7, 7}, {7, 8}, {8, 8}, {8, 8}, {8, 8}},
    {{8, 8}, {8, 8}, {8, 8}, {8, 9}, {9, 9}, {9, 9}},
};

// [score_c][score_d]
constexpr TableC kTableC = {
    {1, 2, 3, 3, 4, 5, 5},
    {2, 2, 3, 4, 4, 5, 5},
    {3, 3, 3, 4, 4, 5, 6},
    {3, 3, 3, 4, 5, 6, 6},
    {4, 4, 4, 5, 6, 7, 7},
    {4, 4, 5, 6, 6, 7, 7},
    {5, 5, 6, 6, 7, 7, 7},
    {5, 5, 6, 7, 7, 7, 7},
};

const TableA& table_a() { return kTableA; }
const TableB& table_b() { return kTableB; }
const TableC& table_c() { return kTableC; }

namespace {
void check_range(const char* what, int v, int hi) {
    if (v < 1 || v > hi) {
        throw InternalConsistency(std::string(what) + " score " + std::to_string(v) +
                                  " outside [1, " + std::to_string(hi) + "]");
    }
}
}  // namespace

int lookup_a(int upper_arm, int lower_arm, int wrist, int wrist_twist) {
    check_range("upper arm", upper_arm, kUpperArm);
    check_range("lower arm", lower_arm, kLowerArm);
    check_range("wrist", wrist, kWrist);
    check_range("wrist twist", wrist_twist, kWristTwist);
    return kTableA[upper_arm - 1][lower_arm - 1][wrist - 1][wrist_twist - 1];
}

int lookup_b(int neck, int trunk, int legs) {
    check_range("neck", neck, kNeck);
    check_range("trunk", trunk, kTrunk);
    check_range("legs", legs, kLegs);
    return kTableB[neck - 1][trunk - 1][legs - 1];
}

int lookup_c(int score_c, int score_d) {
    if (score_c < 1 || score_d < 1) {
        throw InternalConsistency("score C/D must be at least 1");
    }
    return kTableC[std::min(score_c, kScoreC) - 1][std::min(score_d, kScoreD) - 1];
}

}  // namespace rula_tables

std::string_view load_mode_name(LoadMode m) {
    switch (m) {
        case LoadMode::intermittent:
            return "intermittent";
        case LoadMode::static_or_repeated:
            return "static_or_repeated";
        case LoadMode::shock:
            return "shock";
    }
    return "?";
}

LoadMode parse_load_mode(std::string_view s) {
    if (s == "intermittent") return LoadMode::intermittent;
    if (s == "static_or_repeated") return LoadMode::static_or_repeated;
    if (s == "shock") return LoadMode::shock;
    throw InvalidInput("unknown load mode '" + std::string(s) + "'");
}

void TaskContext::validate() const {
    if (!std::isfinite(arm_load_kg) || arm_load_kg < 0.0) {
        throw InvalidInput("arm_load_kg must be finite and >= 0");
    }
    if (!std::isfinite(body_load_kg) || body_load_kg < 0.0) {
        throw InvalidInput("body_load_kg must be finite and >= 0");
    }
    if (!std::isfinite(neck_angle_deg) || neck_angle_deg < -90.0 || neck_angle_deg > 90.0) {
        throw InvalidInput("neck_angle_deg must lie in [-90, 90]");
    }
}

// Bands are half-open [low, high) with the top band closed.

int upper_arm_score(const Posture& q, const TaskContext& ctx, const RulaThresholds& th) {
    const double flex = q.degrees(Joint::shoulder_flexion);
    int s;
    if (flex < -20.0) {
        s = 2;
    } else if (flex < 20.0) {
        s = 1;
    } else if (flex < 45.0) {
        s = 2;
    } else if (flex < 90.0) {
        s = 3;
    } else {
        s = 4;
    }
    if (ctx.shoulder_raised) ++s;
    if (q.degrees(Joint::shoulder_abduction) > th.shoulder_abduction) ++s;
    if (ctx.arm_supported_or_leaning) --s;
    return std::clamp(s, 1, 6);
}

int lower_arm_score(const Posture& q, const TaskContext& ctx, const RulaThresholds&) {
    const double elbow = q.degrees(Joint::elbow_flexion);
    int s = (elbow >= 60.0 && elbow < 100.0) ? 1 : 2;
    if (ctx.working_across_midline) ++s;
    return std::clamp(s, 1, 3);
}

int wrist_score(const Posture& q, const TaskContext& ctx, const RulaThresholds& th) {
    const double flex = std::abs(q.degrees(Joint::wrist_flexion));
    int s;
    if (flex < th.wrist_neutral) {
        s = 1;
    } else if (flex < 15.0) {
        s = 2;
    } else {
        s = 3;
    }
    if (ctx.wrist_bent_from_midline ||
        std::abs(q.degrees(Joint::wrist_deviation)) > th.wrist_deviation) {
        ++s;
    }
    return std::clamp(s, 1, 4);
}

int wrist_twist_score(const Posture& q, const RulaThresholds& th) {
    return std::abs(q.degrees(Joint::forearm_pronation)) > th.wrist_twist ? 2 : 1;
}

int neck_score(const TaskContext& ctx) {
    const double n = ctx.neck_angle_deg;
    int s;
    if (n < 0.0) {
        s = 4;
    } else if (n < 10.0) {
        s = 1;
    } else if (n < 20.0) {
        s = 2;
    } else {
        s = 3;
    }
    if (ctx.neck_twist) ++s;
    if (ctx.neck_side_bend) ++s;
    return std::clamp(s, 1, 6);
}

int trunk_score(const Posture& q, const TaskContext&, const RulaThresholds& th) {
    const double flex = q.degrees(Joint::torso_flexion);
    int s;
    if (flex < th.trunk_upright) {
        s = 1;
    } else if (flex < 20.0) {
        s = 2;
    } else if (flex < 60.0) {
        s = 3;
    } else {
        s = 4;
    }
    if (std::abs(q.degrees(Joint::torso_axial_rotation)) > th.trunk_twist) ++s;
    if (std::abs(q.degrees(Joint::torso_lateral_bend)) > th.trunk_side_bend) ++s;
    return std::clamp(s, 1, 6);
}

int legs_score(const TaskContext& ctx) { return ctx.legs_and_feet_supported ? 1 : 2; }

int muscle_use_score(bool static_or_repeated) { return static_or_repeated ? 1 : 0; }

int force_load_score(double load_kg, LoadMode mode) {
    if (mode == LoadMode::shock || load_kg >= 10.0) return 3;
    if (load_kg < 2.0) return 0;
    return mode == LoadMode::static_or_repeated ? 2 : 1;
}

RulaBreakdown rula(const Posture& q, const TaskContext& ctx, const RulaThresholds& th) {
    RulaBreakdown b;
    b.upper_arm = upper_arm_score(q, ctx, th);
    b.lower_arm = lower_arm_score(q, ctx, th);
    b.wrist = wrist_score(q, ctx, th);
    b.wrist_twist = wrist_twist_score(q, th);
    b.table_a = rula_tables::lookup_a(b.upper_arm, b.lower_arm, b.wrist, b.wrist_twist);
    b.muscle_a = muscle_use_score(ctx.arm_static_or_repeated);
    b.force_a = force_load_score(ctx.arm_load_kg, ctx.arm_load_mode);
    b.score_c = b.table_a + b.muscle_a + b.force_a;

    b.neck = neck_score(ctx);
    b.trunk = trunk_score(q, ctx, th);
    b.legs = legs_score(ctx);
    b.table_b = rula_tables::lookup_b(b.neck, b.trunk, b.legs);
    b.muscle_b = muscle_use_score(ctx.body_static_or_repeated);
    b.force_b = force_load_score(ctx.body_load_kg, ctx.body_load_mode);
    b.score_d = b.table_b + b.muscle_b + b.force_b;

    b.grand = rula_tables::lookup_c(b.score_c, b.score_d);
    if (b.grand < 1 || b.grand > 7) {
        throw InternalConsistency("grand score outside [1, 7]");
    }
    return b;
}

}  // namespace dula
