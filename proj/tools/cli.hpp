#pragma once

#include "dula/serialize.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dula::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kValidation = 3, kRuntime = 4 };

inline constexpr const char* kVersion = "0.1.0";

/// Shared option blocks; every command reads the ones it needs.
struct RunConfig {
    BodyDimensions body;
    JointLimits limits = JointLimits::anatomical();
    DatasetSpec dataset;
    TrainConfig train;
    PoseWeights constraint_weights;
    double constraint_tolerance = 1e-4;
    GradientOptions gradient;
    CemOptions cem;
    HumanModelConfig human;
    std::size_t correction_period = 5;

    io::json to_json() const;
    static RunConfig from_json(const io::json& doc);
};

/// Runs one command with fully resolved arguments, writing into out_dir, and
/// writes `<command>.manifest.json` beside the outputs.
int execute(const std::string& command, const io::json& args, const RunConfig& config,
            const std::filesystem::path& out_dir, std::ostream& out);

/// argv-level entry point (argv[0] is the program name).
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace dula::cli
