#include "dula/error.hpp"
#include "dula/kernels.hpp"
#include "dula/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dula {

void TrainConfig::validate() const {
    if (batch_size == 0) throw InvalidInput("batch_size must be >= 1");
    if (k_folds == 0) throw InvalidInput("k_folds must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidInput("learning_rate must be positive");
    }
    if (momentum < 0.0 || momentum >= 1.0) throw InvalidInput("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw InvalidInput("weight_decay must be nonnegative");
    }
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
        throw InvalidInput("final_lr_fraction must lie in (0, 1]");
    }
}

io::json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"k_folds", k_folds},
            {"rng_seed", rng_seed},
            {"optimizer", optimizer == OptimizerKind::adam ? "adam" : "sgd"},
            {"momentum", momentum},
            {"weight_decay", weight_decay},
            {"cosine_decay", cosine_decay},
            {"final_lr_fraction", final_lr_fraction},
            {"widths", widths}};
}

TrainConfig TrainConfig::from_json(const io::json& doc) {
    TrainConfig c;
    c.epochs = doc.value("epochs", c.epochs);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.k_folds = doc.value("k_folds", c.k_folds);
    c.rng_seed = doc.value("rng_seed", c.rng_seed);
    const std::string opt = doc.value("optimizer", std::string("adam"));
    if (opt == "adam") {
        c.optimizer = OptimizerKind::adam;
    } else if (opt == "sgd") {
        c.optimizer = OptimizerKind::sgd;
    } else {
        throw InvalidInput("unknown optimizer '" + opt + "'");
    }
    c.momentum = doc.value("momentum", c.momentum);
    c.weight_decay = doc.value("weight_decay", c.weight_decay);
    c.cosine_decay = doc.value("cosine_decay", c.cosine_decay);
    c.final_lr_fraction = doc.value("final_lr_fraction", c.final_lr_fraction);
    c.widths = doc.value("widths", c.widths);
    c.validate();
    return c;
}

namespace {

constexpr double kDivergenceBound = 1e6;
constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;

// Per-parameter-vector optimizer state.
struct ParamState {
    std::vector<double> grad;
    std::vector<double> m;  // adam first moment / sgd velocity
    std::vector<double> v;  // adam second moment
};

class Trainer {
public:
    Trainer(SurrogateModel& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {
        for (const auto& l : model_.layers()) {
            weights_.push_back({std::vector<double>(l.weight.size()),
                                std::vector<double>(l.weight.size()),
                                std::vector<double>(l.weight.size())});
            biases_.push_back({std::vector<double>(l.bias.size()), std::vector<double>(l.bias.size()),
                               std::vector<double>(l.bias.size())});
        }
        const std::size_t layers = model_.layers().size();
        acts_.resize(layers + 1);
        deltas_.resize(layers + 1);
    }

    // One minibatch step; returns the batch sum of squared errors.
    double step(const double* x, const double* y, std::size_t rows, double lr) {
        const auto& k = kernels::active();
        auto& layers = model_.mutable_layers();
        const std::size_t n_layers = layers.size();

        acts_[0].assign(x, x + rows * kNumFeatures);
        for (std::size_t li = 0; li < n_layers; ++li) {
            const auto& l = layers[li];
            acts_[li + 1].resize(rows * l.out);
            k.gemm(rows, l.out, l.in, acts_[li].data(), l.weight.data(), acts_[li + 1].data(), false);
            k.bias_act(rows, l.out, l.bias.data(), acts_[li + 1].data(), li + 1 < n_layers);
        }

        // d(mean squared error)/d output
        double sse = 0.0;
        auto& top = deltas_[n_layers];
        top.resize(rows);
        const double scale = 2.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const double e = acts_[n_layers][r] - y[r];
            sse += e * e;
            top[r] = scale * e;
        }

        for (std::size_t li = n_layers; li-- > 0;) {
            const auto& l = layers[li];
            const auto& delta = deltas_[li + 1];
            // dW[in x out] = A^T[in x rows] * delta[rows x out]
            transpose_into(acts_[li], rows, l.in, scratch_);
            k.gemm(l.in, l.out, rows, scratch_.data(), delta.data(), weights_[li].grad.data(), false);
            auto& db = biases_[li].grad;
            std::fill(db.begin(), db.end(), 0.0);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* row = delta.data() + r * l.out;
                for (std::size_t o = 0; o < l.out; ++o) db[o] += row[o];
            }
            if (li > 0) {
                // dA[rows x in] = delta[rows x out] * W^T[out x in]
                transpose_weight(l, wt_);
                deltas_[li].resize(rows * l.in);
                k.gemm(rows, l.in, l.out, delta.data(), wt_.data(), deltas_[li].data(), false);
                k.relu_mask(rows * l.in, acts_[li].data(), deltas_[li].data());
            }
        }

        ++t_;
        for (std::size_t li = 0; li < n_layers; ++li) {
            // decoupled decay, weights only
            if (cfg_.weight_decay > 0.0) {
                const double keep = 1.0 - lr * cfg_.weight_decay;
                for (double& w : layers[li].weight) w *= keep;
            }
            update(layers[li].weight, weights_[li], lr);
            update(layers[li].bias, biases_[li], lr);
        }
        return sse;
    }

private:
    static void transpose_into(const std::vector<double>& a, std::size_t rows, std::size_t cols,
                               std::vector<double>& out) {
        out.resize(rows * cols);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a[r * cols + c];
        }
    }

    static void transpose_weight(const DenseLayer& l, std::vector<double>& out) {
        transpose_into(l.weight, l.in, l.out, out);
    }

    void update(std::vector<double>& param, ParamState& s, double lr) {
        if (cfg_.optimizer == OptimizerKind::adam) {
            const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
            const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
            kernels::active().adam(param.size(), param.data(), s.grad.data(), s.m.data(),
                                   s.v.data(), lr, kBeta1, kBeta2, kAdamEps, bias1, bias2);
            return;
        }
        if (cfg_.momentum > 0.0) {
            for (std::size_t i = 0; i < param.size(); ++i) {
                s.m[i] = cfg_.momentum * s.m[i] + s.grad[i];
                param[i] -= lr * s.m[i];
            }
        } else {
            for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * s.grad[i];
        }
    }

    SurrogateModel& model_;
    const TrainConfig& cfg_;
    std::vector<ParamState> weights_, biases_;
    std::vector<std::vector<double>> acts_, deltas_;
    std::vector<double> scratch_, wt_;
    std::size_t t_ = 0;
};

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
    if (!cfg.cosine_decay || cfg.epochs <= 1) return cfg.learning_rate;
    const double progress = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
    const double lo = cfg.learning_rate * cfg.final_lr_fraction;
    return lo + 0.5 * (cfg.learning_rate - lo) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace

TrainResult train(std::span<const LabeledSample> train_set, const TrainConfig& config,
                  const Normalization& norm, const EpochCallback& on_epoch) {
    config.validate();
    if (train_set.empty()) throw InvalidInput("training set is empty");

    Rng rng(config.rng_seed);
    TrainResult result;
    result.model = SurrogateModel::initialize(config.widths, rng, norm);

    const std::size_t n = train_set.size();
    std::vector<double> x(n * kNumFeatures), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        const FeatureVector f = featurize(train_set[i].posture, train_set[i].context, norm);
        std::copy(f.begin(), f.end(), x.begin() + static_cast<std::ptrdiff_t>(i * kNumFeatures));
        y[i] = static_cast<double>(train_set[i].label);
    }

    Trainer trainer(result.model, config);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> xb(config.batch_size * kNumFeatures), yb(config.batch_size);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = learning_rate_at(config, epoch);
        double sse = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t rows = std::min(config.batch_size, n - start);
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t src = order[start + r];
                std::copy_n(x.data() + src * kNumFeatures, kNumFeatures,
                            xb.data() + r * kNumFeatures);
                yb[r] = y[src];
            }
            sse += trainer.step(xb.data(), yb.data(), rows, lr);
        }
        const double loss = sse / static_cast<double>(n);
        if (!std::isfinite(loss) || loss > kDivergenceBound) throw TrainingFailure(epoch, loss);
        result.metrics.epoch_loss.push_back(loss);
        if (on_epoch) on_epoch(epoch, loss);
    }

    result.model.refresh();
    auto& info = result.model.mutable_training();
    info.seed = config.rng_seed;
    info.config = config.to_json();
    info.config_hash = io::fnv1a_hex(info.config.dump());
    info.epochs_run = config.epochs;
    info.final_loss = result.metrics.epoch_loss.empty() ? 0.0 : result.metrics.epoch_loss.back();
    return result;
}

CrossValidationReport cross_validate(std::span<const LabeledSample> data, const TrainConfig& config,
                                     const Normalization& norm) {
    config.validate();
    if (config.k_folds < 2) throw InvalidInput("cross-validation needs k_folds >= 2");
    const auto folds = stratified_folds(data, config.k_folds, config.rng_seed);
    CrossValidationReport report;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        Dataset train_part, held_out;
        std::vector<bool> in_fold(data.size(), false);
        for (auto i : folds[f]) in_fold[i] = true;
        for (std::size_t i = 0; i < data.size(); ++i) {
            (in_fold[i] ? held_out : train_part).push_back(data[i]);
        }
        TrainConfig fold_cfg = config;
        fold_cfg.rng_seed = config.rng_seed + f + 1;
        const TrainResult r = train(train_part, fold_cfg, norm);
        report.fold_accuracy.push_back(confusion_matrix(r.model, held_out).accuracy());
        report.fold_sizes.push_back(held_out.size());
    }
    const double k = static_cast<double>(report.fold_accuracy.size());
    report.mean_accuracy =
        std::accumulate(report.fold_accuracy.begin(), report.fold_accuracy.end(), 0.0) / k;
    double var = 0.0;
    for (double a : report.fold_accuracy) var += (a - report.mean_accuracy) * (a - report.mean_accuracy);
    report.stddev_accuracy = k > 1 ? std::sqrt(var / (k - 1)) : 0.0;
    return report;
}

}  // namespace dula
