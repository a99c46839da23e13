#pragma once

#include "dula/kinematics.hpp"
#include "dula/rula.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dula {

using Rng = std::mt19937_64;

inline constexpr int kNumLabels = 7;

struct LabeledSample {
    Posture posture;
    TaskContext context;
    int label = 0;  // rula(posture, context).grand

    friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

using Dataset = std::vector<LabeledSample>;
using LabelCounts = std::array<std::size_t, kNumLabels>;

struct DatasetSpec {
    std::size_t total_count = 200'000;
    double per_label_min_fraction = 1.0 / 14.0;
    std::uint64_t rng_seed = 0;
    double split_fraction = 0.8;
    std::uint64_t max_attempts = 1'000'000'000;
    // Independent generation shards (seed + shard index). Output is shard-ordered,
    // so the result does not depend on how many threads run them.
    std::size_t shards = 8;

    void validate() const;
};

/// Uniform over the limit box.
Posture sample_posture(Rng& rng, const JointLimits& lim = JointLimits::anatomical());

/// Featurized flags ~ Bernoulli(0.5), loads ~ U[0, 15] kg, modes uniform, neck ~ U[-30, 45] deg.
/// shoulder_raised, working_across_midline and wrist_bent_from_midline stay false: the
/// surrogate's feature vector does not observe them.
TaskContext sample_context(Rng& rng);

/// Label histogram, index 0 holds label 1.
LabelCounts label_histogram(std::span<const LabeledSample> data);

/// Draws from the plain uniform distributions with no class balancing.
Dataset generate_unbalanced(std::size_t count, std::uint64_t seed,
                            const JointLimits& lim = JointLimits::anatomical());

/// Quota-balanced generation. Every label ends with at least
/// ceil(per_label_min_fraction * total_count) samples and exactly total_count are
/// returned. Throws QuotaFailure naming the starved label when the draw budget runs out.
Dataset generate_balanced(const DatasetSpec& spec,
                          const JointLimits& lim = JointLimits::anatomical());

struct Split {
    Dataset train;
    Dataset test;
};

/// Stratified by label: each class contributes round(fraction * n_class) to train.
Split split(std::span<const LabeledSample> data, double fraction, std::uint64_t seed);

/// k stratified folds of indices into `data`, sizes balanced to within one per class.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const LabeledSample> data,
                                                       std::size_t k, std::uint64_t seed);

// Binary dataset file: 8-byte magic "DULADATA", u32 little-endian header length,
// JSON header, then fixed-size little-endian records (see docs in README).
inline constexpr int kDatasetSchemaVersion = 1;
inline constexpr std::size_t kDatasetRecordSize = 13 * 8 + 1 + 1 + 2 + 1;

struct DatasetHeaderInfo {
    std::uint64_t seed = 0;
    std::string generator = "balanced";
    double per_label_min_fraction = 0.0;
};

void write_dataset(const std::filesystem::path& path, std::span<const LabeledSample> data,
                   const DatasetHeaderInfo& info);
Dataset read_dataset(const std::filesystem::path& path);
void write_dataset_csv(const std::filesystem::path& path, std::span<const LabeledSample> data);

}  // namespace dula
