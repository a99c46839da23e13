#pragma once

#include "dula/dataset.hpp"
#include "dula/io.hpp"
#include "dula/kinematics.hpp"
#include "dula/rula.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dula {

inline constexpr std::size_t kNumFeatures = 19;
using FeatureVector = std::array<double, kNumFeatures>;

/// Constants that map raw inputs onto [-1, 1] features.
struct Normalization {
    JointLimits limits = JointLimits::anatomical();
    double neck_min_deg = -90.0;
    double neck_max_deg = 90.0;

    friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// Feature layout: 10 normalized joint angles, then arm_static, arm_force/3,
/// body_static, body_force/3, normalized neck angle, neck_twist, neck_side_bend,
/// legs_supported, arm_supported.
FeatureVector featurize(const Posture& q, const TaskContext& ctx, const Normalization& norm = {});

/// Inverts the joint-angle block of `featurize`.
Posture defeaturize_posture(const FeatureVector& f, const Normalization& norm = {});

/// d feature_i / d q_i for the angle block (the map is affine and diagonal).
JointVector feature_scale(const Normalization& norm = {});

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weight;  // row-major [in][out]
    std::vector<double> bias;    // [out]
};

/// Provenance stored alongside the weights.
struct TrainingInfo {
    std::uint64_t seed = 0;
    std::string config_hash;
    io::json config = io::json::object();
    std::size_t epochs_run = 0;
    double final_loss = 0.0;
};

/// Fully connected regressor: rectifier on hidden layers, identity on the output.
class SurrogateModel {
public:
    static constexpr std::array<std::size_t, 6> kDefaultWidths = {kNumFeatures, 124, 124, 124, 7,
                                                                   1};

    SurrogateModel() = default;

    /// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    static SurrogateModel initialize(std::span<const std::size_t> widths, Rng& rng,
                                     const Normalization& norm = {});
    static SurrogateModel zeros(std::span<const std::size_t> widths, const Normalization& norm = {});

    /// Raw network output; not clamped.
    double predict(const FeatureVector& f) const;
    double predict(const Posture& q, const TaskContext& ctx) const;

    /// Row-major [n][kNumFeatures] features in, n raw scores out.
    void predict_batch(std::span<const double> features, std::span<double> out) const;

    /// Exact reverse-mode gradient of `predict` w.r.t. the features. Returns the value.
    double input_gradient(const FeatureVector& f, FeatureVector& grad) const;

    /// d DULA / d q chained through the featurization. Returns the value.
    double posture_gradient(const Posture& q, const TaskContext& ctx, JointVector& grad) const;

    /// Product of layer spectral norms: a Lipschitz bound of `predict` on feature space.
    double lipschitz_bound() const;

    std::vector<std::size_t> widths() const;
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& mutable_layers() { return layers_; }
    const Normalization& normalization() const { return norm_; }
    const TrainingInfo& training() const { return training_; }
    TrainingInfo& mutable_training() { return training_; }

    /// Rebuild cached transposed weights after editing layers in place.
    void refresh();

    io::json to_json() const;
    static SurrogateModel from_json(const io::json& doc);

    friend bool operator==(const SurrogateModel& a, const SurrogateModel& b);

private:
    std::vector<DenseLayer> layers_;
    std::vector<std::vector<double>> transposed_;  // [out][in] per layer
    Normalization norm_;
    TrainingInfo training_;
};

/// Reporting-layer score: clamp to [1, 7].
double reported_score(double raw);
/// Reporting-layer discrete score: round(clamp(raw, 1, 7)).
int rounded_score(double raw);

void save_model(const std::filesystem::path& path, const SurrogateModel& model);
SurrogateModel load_model(const std::filesystem::path& path);

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    std::size_t epochs = 2000;
    double learning_rate = 1e-3;
    std::size_t batch_size = 1024;
    std::size_t k_folds = 5;
    std::uint64_t rng_seed = 0;
    OptimizerKind optimizer = OptimizerKind::adam;
    double momentum = 0.0;  // sgd only
    double weight_decay = 0.0;  // decoupled, scaled by the current learning rate
    // Cosine decay from learning_rate to learning_rate * final_lr_fraction when enabled.
    bool cosine_decay = false;
    double final_lr_fraction = 0.01;
    std::vector<std::size_t> widths{SurrogateModel::kDefaultWidths.begin(),
                                    SurrogateModel::kDefaultWidths.end()};

    void validate() const;
    io::json to_json() const;
    static TrainConfig from_json(const io::json& doc);
};

struct TrainMetrics {
    std::vector<double> epoch_loss;  // mean training MSE per epoch
};

struct TrainResult {
    SurrogateModel model;
    TrainMetrics metrics;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Minibatch training on MSE against integer labels treated as reals.
/// Throws TrainingFailure when the loss is non-finite or above 1e6.
TrainResult train(std::span<const LabeledSample> train_set, const TrainConfig& config,
                  const Normalization& norm = {}, const EpochCallback& on_epoch = {});

struct ConfusionMatrix {
    std::array<std::array<std::size_t, kNumLabels>, kNumLabels> counts{};  // [true][predicted]

    std::size_t total() const;
    std::size_t row_total(int label) const;
    /// diagonal / row sum; NaN for an empty row.
    double class_accuracy(int label) const;
    double accuracy() const;
    /// Smallest class accuracy over non-empty rows.
    double min_diagonal() const;
    io::json to_json() const;
};

ConfusionMatrix confusion_matrix(const SurrogateModel& model,
                                 std::span<const LabeledSample> test_set);

double mean_squared_error(const SurrogateModel& model, std::span<const LabeledSample> data);

struct GradientCheckReport {
    std::size_t checked = 0;
    std::size_t excluded_near_kink = 0;
    std::size_t failed = 0;
    double max_relative_error = 0.0;

    bool pass() const { return checked > 0 && failed == 0; }
};

/// Reverse-mode input gradients vs central differences (step h) at `count` uniform
/// points of the feature box. Error per point is |fd - g|_inf / |g|_inf. Points where a
/// rectifier switches inside the stencil (forward and backward slopes differ) are
/// excluded, since central differences are meaningless there.
GradientCheckReport gradient_check(const SurrogateModel& model, std::size_t count,
                                   std::uint64_t seed, double h = 1e-5, double tolerance = 1e-4);

struct CrossValidationReport {
    std::vector<double> fold_accuracy;
    std::vector<std::size_t> fold_sizes;
    double mean_accuracy = 0.0;
    double stddev_accuracy = 0.0;
};

CrossValidationReport cross_validate(std::span<const LabeledSample> data,
                                     const TrainConfig& config, const Normalization& norm = {});

}  // namespace dula
