#include "dula/dataset.hpp"
#include "dula/error.hpp"
#include "dula/rula.hpp"

#include <doctest.h>

#include <cstdint>
#include <numbers>
#include <span>

using namespace dula;
namespace rt = dula::rula_tables;

namespace {

Posture with_degrees(std::initializer_list<std::pair<Joint, double>> angles) {
    Posture q;
    for (auto [j, d] : angles) q[j] = d * std::numbers::pi / 180.0;
    return q;
}

// Worksheet layout: one row per (upper arm, lower arm); columns are wrist 1..4, each
// split into twist 1, 2.
constexpr int kWorksheetA[18][8] = {
    {1, 2, 2, 2, 2, 3, 3, 3}, {2, 2, 2, 2, 3, 3, 3, 3}, {2, 3, 3, 3, 3, 3, 4, 4},
    {2, 3, 3, 3, 3, 4, 4, 4}, {3, 3, 3, 3, 3, 4, 4, 4}, {3, 4, 4, 4, 4, 4, 5, 5},
    {3, 3, 4, 4, 4, 4, 5, 5}, {3, 4, 4, 4, 4, 4, 5, 5}, {4, 4, 4, 4, 4, 5, 5, 5},
    {4, 4, 4, 4, 4, 5, 5, 5}, {4, 4, 4, 4, 4, 5, 5, 5}, {4, 4, 4, 5, 5, 5, 6, 6},
    {5, 5, 5, 5, 5, 6, 6, 7}, {5, 6, 6, 6, 6, 7, 7, 7}, {6, 6, 6, 7, 7, 7, 7, 8},
    {7, 7, 7, 7, 7, 8, 8, 9}, {8, 8, 8, 8, 8, 9, 9, 9}, {9, 9, 9, 9, 9, 9, 9, 9},
};

// One row per neck score; columns are trunk 1..6, each split into legs 1, 2.
constexpr int kWorksheetB[6][12] = {
    {1, 3, 2, 3, 3, 4, 5, 5, 6, 6, 7, 7}, {2, 3, 2, 3, 4, 5, 5, 5, 6, 7, 7, 7},
    {3, 3, 3, 4, 4, 5, 5, 6, 6, 7, 7, 7}, {5, 5, 5, 6, 6, 7, 7, 7, 7, 7, 8, 8},
    {7, 7, 7, 7, 7, 8, 8, 8, 8, 8, 8, 8}, {8, 8, 8, 8, 8, 8, 8, 9, 9, 9, 9, 9},
};

constexpr int kWorksheetC[8][7] = {
    {1, 2, 3, 3, 4, 5, 5}, {2, 2, 3, 4, 4, 5, 5}, {3, 3, 3, 4, 4, 5, 6}, {3, 3, 3, 4, 5, 6, 6},
    {4, 4, 4, 5, 6, 7, 7}, {4, 4, 5, 6, 6, 7, 7}, {5, 5, 6, 6, 7, 7, 7}, {5, 5, 6, 7, 7, 7, 7},
};

std::uint64_t fold(std::uint64_t h, int v) { return (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ull; }

}  // namespace

TEST_CASE("tables match an independent worksheet transcription") {
    for (int ua = 1; ua <= rt::kUpperArm; ++ua)
        for (int la = 1; la <= rt::kLowerArm; ++la)
            for (int w = 1; w <= rt::kWrist; ++w)
                for (int t = 1; t <= rt::kWristTwist; ++t)
                    CHECK(rt::lookup_a(ua, la, w, t) ==
                          kWorksheetA[(ua - 1) * 3 + la - 1][(w - 1) * 2 + t - 1]);
    for (int n = 1; n <= rt::kNeck; ++n)
        for (int tr = 1; tr <= rt::kTrunk; ++tr)
            for (int l = 1; l <= rt::kLegs; ++l)
                CHECK(rt::lookup_b(n, tr, l) == kWorksheetB[n - 1][(tr - 1) * 2 + l - 1]);
    for (int c = 1; c <= rt::kScoreC; ++c)
        for (int d = 1; d <= rt::kScoreD; ++d) CHECK(rt::lookup_c(c, d) == kWorksheetC[c - 1][d - 1]);
}

TEST_CASE("table checksum and shapes") {
    static_assert(sizeof(rt::TableA) / sizeof(int) == 6 * 3 * 4 * 2);
    static_assert(sizeof(rt::TableB) / sizeof(int) == 6 * 6 * 2);
    static_assert(sizeof(rt::TableC) / sizeof(int) == 8 * 7);
    std::uint64_t h = 14695981039346656037ull;
    long sum = 0;
    for (int v : std::span(&rt::table_a()[0][0][0][0], 144)) h = fold(h, v), sum += v;
    for (int v : std::span(&rt::table_b()[0][0][0], 72)) h = fold(h, v), sum += v;
    for (int v : std::span(&rt::table_c()[0][0], 56)) h = fold(h, v), sum += v;
    CHECK(sum == 1412);
    CHECK(h == 0x55c1fde40b17bb33ull);
}

TEST_CASE("table entries stay in range and are monotone along every axis") {
    for (int ua = 1; ua <= 6; ++ua)
        for (int la = 1; la <= 3; ++la)
            for (int w = 1; w <= 4; ++w)
                for (int t = 1; t <= 2; ++t) {
                    const int v = rt::lookup_a(ua, la, w, t);
                    CHECK((v >= 1 && v <= 9));
                    if (ua < 6) CHECK(rt::lookup_a(ua + 1, la, w, t) >= v);
                    if (w < 4) CHECK(rt::lookup_a(ua, la, w + 1, t) >= v);
                    if (t < 2) CHECK(rt::lookup_a(ua, la, w, t + 1) >= v);
                }
    for (int c = 1; c <= 8; ++c)
        for (int d = 1; d <= 7; ++d) {
            const int v = rt::lookup_c(c, d);
            CHECK((v >= 1 && v <= 7));
            if (c < 8) CHECK(rt::lookup_c(c + 1, d) >= v);
            if (d < 7) CHECK(rt::lookup_c(c, d + 1) >= v);
        }
    CHECK(rt::lookup_c(1, 1) == 1);
    CHECK(rt::lookup_c(8, 7) == 7);
    CHECK(rt::lookup_c(13, 11) == 7);
    CHECK_THROWS_AS(rt::lookup_a(7, 1, 1, 1), InternalConsistency);
    CHECK_THROWS_AS(rt::lookup_b(1, 1, 0), InternalConsistency);
}

TEST_CASE("upper arm") {
    const TaskContext none;
    CHECK(upper_arm_score(with_degrees({{Joint::shoulder_flexion, 10}}), none) == 1);
    TaskContext raised;
    raised.shoulder_raised = true;
    CHECK(upper_arm_score(with_degrees({{Joint::shoulder_flexion, 100}}), raised) == 5);
    TaskContext supported;
    supported.arm_supported_or_leaning = true;
    CHECK(upper_arm_score(with_degrees({{Joint::shoulder_flexion, 10}}), supported) == 1);
    CHECK(upper_arm_score(with_degrees({{Joint::shoulder_flexion, -30}}), none) == 2);
    CHECK(upper_arm_score(with_degrees({{Joint::shoulder_flexion, 30}}), none) == 2);
    CHECK(upper_arm_score(with_degrees({{Joint::shoulder_flexion, 60}}), none) == 3);
    CHECK(upper_arm_score(with_degrees({{Joint::shoulder_flexion, 60},
                                        {Joint::shoulder_abduction, 30}}),
                          none) == 4);
    // Band edges are half-open.
    CHECK(upper_arm_score(with_degrees({{Joint::shoulder_flexion, 20}}), none) == 2);
    CHECK(upper_arm_score(with_degrees({{Joint::shoulder_flexion, 90}}), none) == 4);
}

TEST_CASE("other sub-scores") {
    const TaskContext none;
    CHECK(lower_arm_score(with_degrees({{Joint::elbow_flexion, 80}}), none) == 1);
    CHECK(lower_arm_score(with_degrees({{Joint::elbow_flexion, 30}}), none) == 2);
    CHECK(wrist_score(Posture{}, none) == 1);
    CHECK(wrist_score(with_degrees({{Joint::wrist_flexion, -10}}), none) == 2);
    CHECK(wrist_score(with_degrees({{Joint::wrist_flexion, 20}, {Joint::wrist_deviation, 15}}),
                      none) == 4);
    CHECK(wrist_twist_score(Posture{}) == 1);
    CHECK(wrist_twist_score(with_degrees({{Joint::forearm_pronation, -70}})) == 2);

    TaskContext neck;
    neck.neck_angle_deg = 15;
    CHECK(neck_score(neck) == 2);
    neck.neck_angle_deg = -5;
    CHECK(neck_score(neck) == 4);

    CHECK(trunk_score(Posture{}, none) == 1);
    CHECK(trunk_score(with_degrees({{Joint::torso_flexion, 30},
                                    {Joint::torso_axial_rotation, 20},
                                    {Joint::torso_lateral_bend, -20}}),
                      none) == 5);

    TaskContext legs;
    CHECK(legs_score(legs) == 1);
    legs.legs_and_feet_supported = false;
    CHECK(legs_score(legs) == 2);
}

TEST_CASE("muscle use and force") {
    CHECK(muscle_use_score(false) == 0);
    CHECK(muscle_use_score(true) == 1);
    CHECK(force_load_score(0.0, LoadMode::intermittent) == 0);
    CHECK(force_load_score(5.0, LoadMode::static_or_repeated) == 2);
    CHECK(force_load_score(5.0, LoadMode::intermittent) == 1);
    CHECK(force_load_score(12.0, LoadMode::intermittent) == 3);
    CHECK(force_load_score(1.0, LoadMode::shock) == 3);
}

TEST_CASE("grand score examples") {
    TaskContext ctx;
    const RulaBreakdown b = rula(with_degrees({{Joint::elbow_flexion, 80}}), ctx);
    CHECK(b.upper_arm == 1);
    CHECK(b.lower_arm == 1);
    CHECK(b.wrist == 1);
    CHECK(b.wrist_twist == 1);
    CHECK(b.table_a == 1);
    CHECK(b.table_b == 1);
    CHECK(b.grand == 1);

    TaskContext heavy;
    heavy.arm_load_kg = heavy.body_load_kg = 20.0;
    heavy.arm_static_or_repeated = heavy.body_static_or_repeated = true;
    heavy.neck_angle_deg = -10;
    heavy.neck_twist = heavy.neck_side_bend = true;
    const Posture worst = with_degrees({{Joint::shoulder_flexion, 120},
                                        {Joint::shoulder_abduction, 60},
                                        {Joint::torso_flexion, 70},
                                        {Joint::torso_axial_rotation, 30}});
    const RulaBreakdown w = rula(worst, heavy);
    CHECK(w.score_c >= 8);
    CHECK(w.score_d >= 7);
    CHECK(w.grand == 7);

    // Hand-traced mid case: flexion 50 (3), elbow 30 (2), wrist 10 (2), no twist
    // -> A = 4; +1 static, +1 for 5 kg intermittent -> C = 6. Neck 15 (2), trunk 10 (2),
    // legs 1 -> B = 2; D = 2. TableC(6, 2) = 4.
    TaskContext mid;
    mid.arm_static_or_repeated = true;
    mid.arm_load_kg = 5.0;
    mid.neck_angle_deg = 15;
    const RulaBreakdown m = rula(with_degrees({{Joint::shoulder_flexion, 50},
                                               {Joint::elbow_flexion, 30},
                                               {Joint::wrist_flexion, 10},
                                               {Joint::torso_flexion, 10}}),
                                 mid);
    CHECK(m.table_a == 4);
    CHECK(m.score_c == 6);
    CHECK(m.table_b == 2);
    CHECK(m.score_d == 2);
    CHECK(m.grand == 4);
}

TEST_CASE("monotone under load and adjustment flags") {
    Rng rng(21);
    std::uniform_real_distribution<double> extra(0.0, 10.0);
    for (int n = 0; n < 20000; ++n) {
        const Posture q = sample_posture(rng);
        const TaskContext c = sample_context(rng);
        const int g = rula(q, c).grand;
        CHECK(rula(q, c) == rula(q, c));

        TaskContext more = c;
        more.arm_load_kg += extra(rng);
        more.body_load_kg += extra(rng);
        CHECK(rula(q, more).grand >= g);

        for (bool TaskContext::*flag :
             {&TaskContext::shoulder_raised, &TaskContext::working_across_midline,
              &TaskContext::wrist_bent_from_midline, &TaskContext::neck_twist,
              &TaskContext::neck_side_bend, &TaskContext::arm_static_or_repeated,
              &TaskContext::body_static_or_repeated}) {
            TaskContext f = c;
            f.*flag = true;
            CHECK(rula(q, f).grand >= g);
        }
    }
}

TEST_CASE("context validation") {
    TaskContext c;
    c.arm_load_kg = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = {};
    c.neck_angle_deg = 95.0;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    CHECK(parse_load_mode(load_mode_name(LoadMode::shock)) == LoadMode::shock);
    CHECK_THROWS_AS(parse_load_mode("heavy"), InvalidInput);
}
