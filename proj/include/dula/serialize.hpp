#pragma once

#include "dula/dataset.hpp"
#include "dula/io.hpp"
#include "dula/kinematics.hpp"
#include "dula/optimizer.hpp"
#include "dula/rula.hpp"
#include "dula/surrogate.hpp"
#include "dula/teleop.hpp"

namespace dula {

// Angles are written in radians; readers also accept "angles_deg".
io::json posture_to_json(const Posture& q);
Posture posture_from_json(const io::json& j);

io::json context_to_json(const TaskContext& c);
TaskContext context_from_json(const io::json& j);

// {"position": [x, y, z], "orientation": [w, x, y, z]}
io::json pose_to_json(const HandPose& p);
HandPose pose_from_json(const io::json& j);

// Keyed by joint name; radians are written, "lower_deg"/"upper_deg" also accepted.
io::json limits_to_json(const JointLimits& l);
JointLimits limits_from_json(const io::json& j);

io::json body_to_json(const BodyDimensions& b);
BodyDimensions body_from_json(const io::json& j);

io::json dataset_spec_to_json(const DatasetSpec& s);
DatasetSpec dataset_spec_from_json(const io::json& j);

io::json gradient_options_to_json(const GradientOptions& o);
GradientOptions gradient_options_from_json(const io::json& j);

io::json cem_options_to_json(const CemOptions& o);
CemOptions cem_options_from_json(const io::json& j);

io::json human_to_json(const HumanModelConfig& h);
HumanModelConfig human_from_json(const io::json& j);

io::json teleop_task_to_json(const TeleopTask& t);
TeleopTask teleop_task_from_json(const io::json& j);

}  // namespace dula
