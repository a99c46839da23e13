#include "dula/error.hpp"
#include "dula/serialize.hpp"

#include <doctest.h>

#include <numbers>

using namespace dula;

TEST_CASE("posture: radians written, degrees accepted") {
    Rng rng(1);
    const Posture q = sample_posture(rng);
    CHECK(posture_from_json(io::json::parse(posture_to_json(q).dump())) == q);
    io::json deg = {{"angles_deg", {0, 0, 0, 90, 0, 0, 45, 0, 0, 0}}};
    const Posture p = posture_from_json(deg);
    CHECK(p[Joint::shoulder_flexion] == doctest::Approx(std::numbers::pi / 2));
    CHECK(p[Joint::elbow_flexion] == doctest::Approx(std::numbers::pi / 4));
    CHECK_THROWS_AS(posture_from_json(io::json{{"angles_rad", {1, 2}}}), InvalidInput);
}

TEST_CASE("context, pose, limits, body round trip") {
    Rng rng(2);
    for (int n = 0; n < 20; ++n) {
        TaskContext c = sample_context(rng);
        c.wrist_bent_from_midline = n % 2 == 0;
        CHECK(context_from_json(io::json::parse(context_to_json(c).dump())) == c);
        const HandPose hp = forward_kinematics(sample_posture(rng));
        const HandPose back = pose_from_json(io::json::parse(pose_to_json(hp).dump()));
        CHECK(back.position == hp.position);
        CHECK(back.orientation.coeffs() == hp.orientation.coeffs());
    }
    const JointLimits lim = JointLimits::anatomical();
    CHECK(limits_from_json(io::json::parse(limits_to_json(lim).dump())) == lim);
    io::json lj = limits_to_json(lim);
    lj["knee"] = {{"lower", -1}, {"upper", 1}};
    CHECK_THROWS_AS(limits_from_json(lj), InvalidInput);

    BodyDimensions b;
    b.forearm = 0.31;
    const BodyDimensions bb = body_from_json(body_to_json(b));
    CHECK(bb.forearm == 0.31);
    CHECK(bb.shoulder_offset == b.shoulder_offset);

    TaskContext bad;
    io::json cj = context_to_json(bad);
    cj["arm_load_kg"] = -2;
    CHECK_THROWS_AS(context_from_json(cj), InvalidInput);
    cj = context_to_json(bad);
    cj["arm_load_mode"] = "sometimes";
    CHECK_THROWS_AS(context_from_json(cj), InvalidInput);
}

TEST_CASE("option blocks round trip") {
    DatasetSpec s;
    s.total_count = 99;
    s.rng_seed = 12345678901234ull;
    CHECK(dataset_spec_to_json(dataset_spec_from_json(dataset_spec_to_json(s))) ==
          dataset_spec_to_json(s));
    GradientOptions g;
    g.starts = 2;
    CHECK(gradient_options_to_json(gradient_options_from_json(gradient_options_to_json(g))) ==
          gradient_options_to_json(g));
    CemOptions c;
    c.elite_fraction = 0.25;
    CHECK(cem_options_to_json(cem_options_from_json(cem_options_to_json(c))) == cem_options_to_json(c));
    HumanModelConfig h;
    h.horizon = 3;
    CHECK(human_to_json(human_from_json(human_to_json(h))) == human_to_json(h));
    TrainConfig t;
    t.optimizer = OptimizerKind::sgd;
    t.weight_decay = 0.03;
    CHECK(TrainConfig::from_json(t.to_json()).to_json() == t.to_json());
}

TEST_CASE("teleop task round trip") {
    const TeleopTask t = demo_task(5);
    const TeleopTask back = teleop_task_from_json(io::json::parse(teleop_task_to_json(t).dump()));
    CHECK(back.start == t.start);
    CHECK(back.context == t.context);
    CHECK((back.follower_goal.position - t.follower_goal.position).norm() == 0.0);
    CHECK(back.mapping.translation == t.mapping.translation);
    CHECK(back.max_steps == t.max_steps);
    CHECK(teleop_task_to_json(back) == teleop_task_to_json(t));
}
