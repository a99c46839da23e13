#include "dula/surrogate.hpp"

#include "dula/error.hpp"
#include "dula/kernels.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace dula {

namespace {

double normalize(double v, double lo, double hi) { return (2.0 * v - (lo + hi)) / (hi - lo); }

constexpr std::array<const char*, kNumFeatures - kNumJoints> kContextFeatureNames = {
    "arm_static_or_repeated", "arm_force_score_over_3", "body_static_or_repeated",
    "body_force_score_over_3", "neck_angle", "neck_twist", "neck_side_bend",
    "legs_and_feet_supported", "arm_supported_or_leaning",
};

std::vector<double> transpose(const DenseLayer& l) {
    std::vector<double> t(l.in * l.out);
    for (std::size_t i = 0; i < l.in; ++i) {
        for (std::size_t o = 0; o < l.out; ++o) t[o * l.in + i] = l.weight[i * l.out + o];
    }
    return t;
}

std::size_t max_width(const std::vector<DenseLayer>& layers) {
    std::size_t w = kNumFeatures;
    for (const auto& l : layers) w = std::max({w, l.in, l.out});
    return w;
}

}  // namespace

FeatureVector featurize(const Posture& q, const TaskContext& ctx, const Normalization& norm) {
    FeatureVector f{};
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        f[i] = normalize(q.angles[i], norm.limits.lower[i], norm.limits.upper[i]);
    }
    std::size_t k = kNumJoints;
    f[k++] = ctx.arm_static_or_repeated ? 1.0 : 0.0;
    f[k++] = force_load_score(ctx.arm_load_kg, ctx.arm_load_mode) / 3.0;
    f[k++] = ctx.body_static_or_repeated ? 1.0 : 0.0;
    f[k++] = force_load_score(ctx.body_load_kg, ctx.body_load_mode) / 3.0;
    f[k++] = normalize(ctx.neck_angle_deg, norm.neck_min_deg, norm.neck_max_deg);
    f[k++] = ctx.neck_twist ? 1.0 : 0.0;
    f[k++] = ctx.neck_side_bend ? 1.0 : 0.0;
    f[k++] = ctx.legs_and_feet_supported ? 1.0 : 0.0;
    f[k++] = ctx.arm_supported_or_leaning ? 1.0 : 0.0;
    return f;
}

Posture defeaturize_posture(const FeatureVector& f, const Normalization& norm) {
    Posture q;
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        const double lo = norm.limits.lower[i], hi = norm.limits.upper[i];
        q.angles[i] = 0.5 * (f[i] * (hi - lo) + lo + hi);
    }
    return q;
}

JointVector feature_scale(const Normalization& norm) {
    JointVector s;
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        s(static_cast<Eigen::Index>(i)) = 2.0 / (norm.limits.upper[i] - norm.limits.lower[i]);
    }
    return s;
}

SurrogateModel SurrogateModel::initialize(std::span<const std::size_t> widths, Rng& rng,
                                          const Normalization& norm) {
    SurrogateModel m = zeros(widths, norm);
    for (auto& l : m.layers_) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : l.weight) w = dist(rng);
        for (double& b : l.bias) b = dist(rng);
    }
    m.refresh();
    return m;
}

SurrogateModel SurrogateModel::zeros(std::span<const std::size_t> widths,
                                     const Normalization& norm) {
    if (widths.size() < 2 || widths.front() != kNumFeatures || widths.back() != 1) {
        throw InvalidInput("layer widths must start at 19 features and end in one output");
    }
    SurrogateModel m;
    m.norm_ = norm;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        if (widths[i] == 0 || widths[i + 1] == 0) throw InvalidInput("layer width must be >= 1");
        DenseLayer l;
        l.in = widths[i];
        l.out = widths[i + 1];
        l.weight.assign(l.in * l.out, 0.0);
        l.bias.assign(l.out, 0.0);
        m.layers_.push_back(std::move(l));
    }
    m.refresh();
    return m;
}

void SurrogateModel::refresh() {
    transposed_.clear();
    for (const auto& l : layers_) transposed_.push_back(transpose(l));
}

std::vector<std::size_t> SurrogateModel::widths() const {
    std::vector<std::size_t> w;
    if (layers_.empty()) return w;
    w.push_back(layers_.front().in);
    for (const auto& l : layers_) w.push_back(l.out);
    return w;
}

double SurrogateModel::predict(const FeatureVector& f) const {
    const auto& k = kernels::active();
    const std::size_t width = max_width(layers_);
    thread_local std::vector<double> a, z;
    a.assign(f.begin(), f.end());
    a.resize(std::max(width, kNumFeatures));
    z.resize(width);
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const auto& l = layers_[li];
        k.gemm(1, l.out, l.in, a.data(), l.weight.data(), z.data(), false);
        k.bias_act(1, l.out, l.bias.data(), z.data(), li + 1 < layers_.size());
        a.swap(z);
    }
    return a[0];
}

double SurrogateModel::predict(const Posture& q, const TaskContext& ctx) const {
    return predict(featurize(q, ctx, norm_));
}

void SurrogateModel::predict_batch(std::span<const double> features, std::span<double> out) const {
    const std::size_t n = out.size();
    if (features.size() != n * kNumFeatures) {
        throw InvalidInput("predict_batch: feature buffer size mismatch");
    }
    const auto& k = kernels::active();
    constexpr std::size_t kChunk = 512;
    const std::size_t width = max_width(layers_);
    std::vector<double> a(kChunk * width), z(kChunk * width);
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t rows = std::min(kChunk, n - start);
        std::copy_n(features.data() + start * kNumFeatures, rows * kNumFeatures, a.data());
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            const auto& l = layers_[li];
            k.gemm(rows, l.out, l.in, a.data(), l.weight.data(), z.data(), false);
            k.bias_act(rows, l.out, l.bias.data(), z.data(), li + 1 < layers_.size());
            std::swap(a, z);
        }
        for (std::size_t r = 0; r < rows; ++r) out[start + r] = a[r];
    }
}

double SurrogateModel::input_gradient(const FeatureVector& f, FeatureVector& grad) const {
    const auto& k = kernels::active();
    const std::size_t n_layers = layers_.size();
    // acts[0] = input, acts[l] = post-activation output of layer l.
    // Per-thread scratch keeps the optimizer's inner loop allocation-free.
    thread_local std::vector<std::vector<double>> acts;
    thread_local std::vector<double> delta, prev;
    acts.resize(n_layers + 1);
    acts[0].assign(f.begin(), f.end());
    for (std::size_t li = 0; li < n_layers; ++li) {
        const auto& l = layers_[li];
        acts[li + 1].resize(l.out);
        k.gemm(1, l.out, l.in, acts[li].data(), l.weight.data(), acts[li + 1].data(), false);
        k.bias_act(1, l.out, l.bias.data(), acts[li + 1].data(), li + 1 < n_layers);
    }
    const double value = acts[n_layers][0];

    delta.assign(1, 1.0);
    for (std::size_t li = n_layers; li-- > 0;) {
        const auto& l = layers_[li];
        prev.assign(l.in, 0.0);
        // prev[1 x in] = delta[1 x out] * W^T[out x in]
        k.gemm(1, l.in, l.out, delta.data(), transposed_[li].data(), prev.data(), false);
        if (li > 0) k.relu_mask(l.in, acts[li].data(), prev.data());
        delta.swap(prev);
    }
    if (delta.size() != kNumFeatures) throw InternalConsistency("input layer width mismatch");
    for (std::size_t i = 0; i < kNumFeatures; ++i) grad[i] = delta[i];
    return value;
}

double SurrogateModel::posture_gradient(const Posture& q, const TaskContext& ctx,
                                        JointVector& grad) const {
    FeatureVector g{};
    const double value = input_gradient(featurize(q, ctx, norm_), g);
    const JointVector scale = feature_scale(norm_);
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        grad(e) = g[i] * scale(e);
    }
    return value;
}

double SurrogateModel::lipschitz_bound() const {
    double bound = 1.0;
    for (const auto& l : layers_) {
        const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            w(l.weight.data(), static_cast<Eigen::Index>(l.in), static_cast<Eigen::Index>(l.out));
        const Eigen::MatrixXd dense = w;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense);
        bound *= svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    }
    return bound;
}

bool operator==(const SurrogateModel& a, const SurrogateModel& b) {
    if (a.layers_.size() != b.layers_.size() || !(a.norm_ == b.norm_)) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
        const auto& x = a.layers_[i];
        const auto& y = b.layers_[i];
        if (x.in != y.in || x.out != y.out || x.weight != y.weight || x.bias != y.bias) return false;
    }
    return true;
}

double reported_score(double raw) { return std::clamp(raw, 1.0, 7.0); }

int rounded_score(double raw) {
    if (!std::isfinite(raw)) return 7;
    return static_cast<int>(std::lround(reported_score(raw)));
}

io::json SurrogateModel::to_json() const {
    io::json layers = io::json::array();
    for (const auto& l : layers_) {
        layers.push_back({{"in", l.in}, {"out", l.out}, {"weight", l.weight}, {"bias", l.bias}});
    }
    io::json features = io::json::array();
    for (std::size_t i = 0; i < kNumJoints; ++i) features.push_back(joint_name(static_cast<Joint>(i)));
    for (const char* n : kContextFeatureNames) features.push_back(n);
    return {
        {"format", "dula-surrogate"},
        {"schema_version", 1},
        {"layer_widths", widths()},
        {"hidden_activation", "relu"},
        {"output_activation", "identity"},
        {"weight_layout", "row-major [in][out]"},
        {"layers", layers},
        {"feature_order", features},
        {"normalization",
         {{"joint_lower", norm_.limits.lower},
          {"joint_upper", norm_.limits.upper},
          {"neck_min_deg", norm_.neck_min_deg},
          {"neck_max_deg", norm_.neck_max_deg}}},
        {"training",
         {{"seed", training_.seed},
          {"config", training_.config},
          {"config_hash", training_.config_hash},
          {"epochs_run", training_.epochs_run},
          {"final_loss", training_.final_loss}}},
    };
}

SurrogateModel SurrogateModel::from_json(const io::json& doc) {
    try {
        if (doc.at("format") != "dula-surrogate" || doc.at("schema_version") != 1) {
            throw FormatError("not a schema-1 surrogate checkpoint");
        }
        Normalization norm;
        const auto& n = doc.at("normalization");
        norm.limits.lower = n.at("joint_lower").get<std::array<double, kNumJoints>>();
        norm.limits.upper = n.at("joint_upper").get<std::array<double, kNumJoints>>();
        norm.neck_min_deg = n.at("neck_min_deg").get<double>();
        norm.neck_max_deg = n.at("neck_max_deg").get<double>();
        const auto widths = doc.at("layer_widths").get<std::vector<std::size_t>>();
        SurrogateModel m = zeros(widths, norm);
        const auto& layers = doc.at("layers");
        if (layers.size() != m.layers_.size()) throw FormatError("layer count mismatch");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            auto& l = m.layers_[i];
            l.weight = layers[i].at("weight").get<std::vector<double>>();
            l.bias = layers[i].at("bias").get<std::vector<double>>();
            if (l.weight.size() != l.in * l.out || l.bias.size() != l.out) {
                throw FormatError("layer " + std::to_string(i) + " has inconsistent dimensions");
            }
            for (double v : l.weight) {
                if (!std::isfinite(v)) throw FormatError("non-finite weight");
            }
            for (double v : l.bias) {
                if (!std::isfinite(v)) throw FormatError("non-finite bias");
            }
        }
        if (doc.contains("training")) {
            const auto& t = doc.at("training");
            m.training_.seed = t.value("seed", std::uint64_t{0});
            m.training_.config = t.value("config", io::json::object());
            m.training_.config_hash = t.value("config_hash", std::string{});
            m.training_.epochs_run = t.value("epochs_run", std::size_t{0});
            m.training_.final_loss = t.value("final_loss", 0.0);
        }
        m.refresh();
        return m;
    } catch (const io::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const SurrogateModel& model) {
    io::write_json(path, model.to_json());
}

SurrogateModel load_model(const std::filesystem::path& path) {
    return SurrogateModel::from_json(io::read_json(path));
}

std::size_t ConfusionMatrix::total() const {
    std::size_t t = 0;
    for (const auto& row : counts) {
        for (auto c : row) t += c;
    }
    return t;
}

std::size_t ConfusionMatrix::row_total(int label) const {
    std::size_t t = 0;
    for (auto c : counts[static_cast<std::size_t>(label - 1)]) t += c;
    return t;
}

double ConfusionMatrix::class_accuracy(int label) const {
    const std::size_t row = row_total(label);
    if (row == 0) return std::nan("");
    const auto i = static_cast<std::size_t>(label - 1);
    return static_cast<double>(counts[i][i]) / static_cast<double>(row);
}

double ConfusionMatrix::accuracy() const {
    std::size_t diag = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) diag += counts[i][i];
    const std::size_t t = total();
    return t == 0 ? std::nan("") : static_cast<double>(diag) / static_cast<double>(t);
}

double ConfusionMatrix::min_diagonal() const {
    double m = 1.0;
    for (int l = 1; l <= kNumLabels; ++l) {
        if (row_total(l) > 0) m = std::min(m, class_accuracy(l));
    }
    return m;
}

io::json ConfusionMatrix::to_json() const {
    io::json per_class = io::json::array();
    for (int l = 1; l <= kNumLabels; ++l) {
        const double a = class_accuracy(l);
        per_class.push_back(std::isnan(a) ? io::json(nullptr) : io::json(a));
    }
    return {{"counts", counts},
            {"per_class_accuracy", per_class},
            {"accuracy", accuracy()},
            {"min_diagonal", min_diagonal()},
            {"total", total()}};
}

namespace {
std::vector<double> feature_matrix(std::span<const LabeledSample> data, const Normalization& norm) {
    std::vector<double> x(data.size() * kNumFeatures);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const FeatureVector f = featurize(data[i].posture, data[i].context, norm);
        std::copy(f.begin(), f.end(), x.begin() + static_cast<std::ptrdiff_t>(i * kNumFeatures));
    }
    return x;
}
}  // namespace

ConfusionMatrix confusion_matrix(const SurrogateModel& model,
                                 std::span<const LabeledSample> test_set) {
    const std::vector<double> x = feature_matrix(test_set, model.normalization());
    std::vector<double> pred(test_set.size());
    model.predict_batch(x, pred);
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const auto t = static_cast<std::size_t>(test_set[i].label - 1);
        const auto p = static_cast<std::size_t>(rounded_score(pred[i]) - 1);
        ++cm.counts[t][p];
    }
    return cm;
}

double mean_squared_error(const SurrogateModel& model, std::span<const LabeledSample> data) {
    if (data.empty()) return 0.0;
    const std::vector<double> x = feature_matrix(data, model.normalization());
    std::vector<double> pred(data.size());
    model.predict_batch(x, pred);
    double s = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double e = pred[i] - data[i].label;
        s += e * e;
    }
    return s / static_cast<double>(data.size());
}

GradientCheckReport gradient_check(const SurrogateModel& model, std::size_t count,
                                   std::uint64_t seed, double h, double tolerance) {
    if (!(h > 0.0) || !(tolerance > 0.0)) throw InvalidInput("step and tolerance must be positive");
    GradientCheckReport r;
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t n = 0; n < count; ++n) {
        FeatureVector f;
        for (double& v : f) v = u(rng);
        FeatureVector g;
        const double f0 = model.input_gradient(f, g);
        bool kink = false;
        double diff = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < kNumFeatures && !kink; ++i) {
            FeatureVector fp = f, fm = f;
            fp[i] += h;
            fm[i] -= h;
            const double up = model.predict(fp), down = model.predict(fm);
            const double fd = (up - down) / (2.0 * h);
            if (std::abs((up - f0) - (f0 - down)) / h > 1e-6 * std::max(1.0, std::abs(fd))) kink = true;
            diff = std::max(diff, std::abs(fd - g[i]));
            scale = std::max(scale, std::abs(g[i]));
        }
        if (kink) {
            ++r.excluded_near_kink;
            continue;
        }
        ++r.checked;
        const double err = scale > 0.0 ? diff / scale : diff;
        r.max_relative_error = std::max(r.max_relative_error, err);
        if (err > tolerance) ++r.failed;
    }
    return r;
}

}  // namespace dula
