#include "dula/dataset.hpp"

#include "dula/error.hpp"
#include "dula/io.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace dula {

static_assert(std::endian::native == std::endian::little,
              "dataset records are written in host byte order");

namespace {

constexpr double rad(double d) { return d * std::numbers::pi / 180.0; }

// Low-risk sub-interval of each joint, in degrees. Every band sits inside the
// anatomical limits and yields the minimal worksheet sub-score for that joint.
constexpr std::array<std::array<double, 2>, kNumJoints> kNeutralBandsDeg = {{
    {-10.0, 5.0},   // torso flexion: upright
    {-15.0, 15.0},  // lateral bend below side-bend threshold
    {-15.0, 15.0},  // axial rotation below twist threshold
    {-20.0, 20.0},  // shoulder flexion band 1
    {-30.0, 20.0},  // no abduction adjustment
    {-90.0, 90.0},  // shoulder rotation does not enter the score
    {60.0, 100.0},  // elbow band 1
    {-60.0, 60.0},  // forearm mid-range
    {-5.0, 5.0},    // wrist neutral
    {-10.0, 10.0},  // no deviation
}};

bool bernoulli(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

LoadMode uniform_mode(Rng& rng) {
    return static_cast<LoadMode>(std::uniform_int_distribution<int>(0, 2)(rng));
}

// Proposal used by balanced generation: a per-draw mixing weight beta picks, for
// every posture joint and context field independently, between the low-risk band
// (probability beta) and the plain sampling distribution. beta ~ U[0, 1] spreads
// draws over the whole 1..7 label range.
LabeledSample draw_mixed(Rng& rng, const JointLimits& lim) {
    const double beta = uniform(rng, 0.0, 1.0);
    LabeledSample s;
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        double lo = lim.lower[i], hi = lim.upper[i];
        if (bernoulli(rng, beta)) {
            lo = std::max(lo, rad(kNeutralBandsDeg[i][0]));
            hi = std::min(hi, rad(kNeutralBandsDeg[i][1]));
            if (!(lo < hi)) {
                lo = lim.lower[i];
                hi = lim.upper[i];
            }
        }
        s.posture.angles[i] = uniform(rng, lo, hi);
    }
    TaskContext& c = s.context;
    c.arm_static_or_repeated = bernoulli(rng, beta) ? false : bernoulli(rng, 0.5);
    c.body_static_or_repeated = bernoulli(rng, beta) ? false : bernoulli(rng, 0.5);
    if (bernoulli(rng, beta)) {
        c.arm_load_kg = uniform(rng, 0.0, 2.0);
        c.arm_load_mode = LoadMode::intermittent;
    } else {
        c.arm_load_kg = uniform(rng, 0.0, 15.0);
        c.arm_load_mode = uniform_mode(rng);
    }
    if (bernoulli(rng, beta)) {
        c.body_load_kg = uniform(rng, 0.0, 2.0);
        c.body_load_mode = LoadMode::intermittent;
    } else {
        c.body_load_kg = uniform(rng, 0.0, 15.0);
        c.body_load_mode = uniform_mode(rng);
    }
    c.neck_angle_deg = bernoulli(rng, beta) ? uniform(rng, 0.0, 10.0) : uniform(rng, -30.0, 45.0);
    c.neck_twist = bernoulli(rng, beta) ? false : bernoulli(rng, 0.5);
    c.neck_side_bend = bernoulli(rng, beta) ? false : bernoulli(rng, 0.5);
    c.legs_and_feet_supported = bernoulli(rng, beta) ? true : bernoulli(rng, 0.5);
    c.arm_supported_or_leaning = bernoulli(rng, beta) ? true : bernoulli(rng, 0.5);
    s.label = rula(s.posture, s.context).grand;
    return s;
}

struct ShardPlan {
    std::size_t total = 0;
    std::size_t quota = 0;  // per label
    std::uint64_t max_attempts = 0;
};

Dataset run_shard(const ShardPlan& plan, std::uint64_t seed, const JointLimits& lim) {
    Rng rng(seed);
    Dataset out;
    out.reserve(plan.total);
    LabelCounts counts{};
    std::size_t free_slots = plan.total - kNumLabels * plan.quota;
    std::uint64_t attempts = 0;
    while (out.size() < plan.total) {
        if (attempts++ >= plan.max_attempts) {
            const auto starved = std::min_element(counts.begin(), counts.end());
            const int label = static_cast<int>(starved - counts.begin()) + 1;
            throw QuotaFailure(label, *starved, plan.quota);
        }
        LabeledSample s = draw_mixed(rng, lim);
        std::size_t& n = counts[static_cast<std::size_t>(s.label - 1)];
        if (n < plan.quota) {
            ++n;
            out.push_back(s);
        } else if (free_slots > 0) {
            --free_slots;
            ++n;
            out.push_back(s);
        }
    }
    return out;
}

std::uint64_t shard_seed(std::uint64_t seed, std::size_t shard) {
    // splitmix64 finalizer keeps neighbouring shard streams decorrelated.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (shard + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

template <typename T>
void put(std::string& buf, T v) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

template <typename T>
T get(const char*& p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    return v;
}

constexpr std::array<const char*, 9> kFlagNames = {
    "arm_static_or_repeated", "body_static_or_repeated", "neck_twist",
    "neck_side_bend",         "legs_and_feet_supported", "arm_supported_or_leaning",
    "shoulder_raised",        "working_across_midline",  "wrist_bent_from_midline",
};

std::uint16_t pack_flags(const TaskContext& c) {
    const std::array<bool, 9> f = {c.arm_static_or_repeated, c.body_static_or_repeated,
                                   c.neck_twist,             c.neck_side_bend,
                                   c.legs_and_feet_supported, c.arm_supported_or_leaning,
                                   c.shoulder_raised,        c.working_across_midline,
                                   c.wrist_bent_from_midline};
    std::uint16_t bits = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i]) bits |= static_cast<std::uint16_t>(1u << i);
    }
    return bits;
}

void unpack_flags(std::uint16_t bits, TaskContext& c) {
    auto bit = [&](int i) { return ((bits >> i) & 1u) != 0; };
    c.arm_static_or_repeated = bit(0);
    c.body_static_or_repeated = bit(1);
    c.neck_twist = bit(2);
    c.neck_side_bend = bit(3);
    c.legs_and_feet_supported = bit(4);
    c.arm_supported_or_leaning = bit(5);
    c.shoulder_raised = bit(6);
    c.working_across_midline = bit(7);
    c.wrist_bent_from_midline = bit(8);
}

constexpr char kMagic[8] = {'D', 'U', 'L', 'A', 'D', 'A', 'T', 'A'};

}  // namespace

void DatasetSpec::validate() const {
    if (total_count == 0) throw InvalidInput("total_count must be positive");
    if (!(per_label_min_fraction > 0.0) ||
        per_label_min_fraction * kNumLabels > 1.0 + 1e-12) {
        throw InvalidInput("per_label_min_fraction must lie in (0, 1/7]");
    }
    const auto quota = static_cast<std::size_t>(
        std::ceil(per_label_min_fraction * static_cast<double>(total_count) - 1e-9));
    if (quota * kNumLabels > total_count) {
        throw InvalidInput("label quotas exceed total_count");
    }
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
        throw InvalidInput("split_fraction must lie in (0, 1)");
    }
    if (shards == 0) throw InvalidInput("shards must be at least 1");
}

Posture sample_posture(Rng& rng, const JointLimits& lim) {
    Posture q;
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        q.angles[i] = uniform(rng, lim.lower[i], lim.upper[i]);
    }
    return q;
}

TaskContext sample_context(Rng& rng) {
    TaskContext c;
    c.arm_static_or_repeated = bernoulli(rng, 0.5);
    c.body_static_or_repeated = bernoulli(rng, 0.5);
    c.arm_load_kg = uniform(rng, 0.0, 15.0);
    c.arm_load_mode = uniform_mode(rng);
    c.body_load_kg = uniform(rng, 0.0, 15.0);
    c.body_load_mode = uniform_mode(rng);
    c.neck_angle_deg = uniform(rng, -30.0, 45.0);
    c.neck_twist = bernoulli(rng, 0.5);
    c.neck_side_bend = bernoulli(rng, 0.5);
    c.legs_and_feet_supported = bernoulli(rng, 0.5);
    c.arm_supported_or_leaning = bernoulli(rng, 0.5);
    return c;
}

LabelCounts label_histogram(std::span<const LabeledSample> data) {
    LabelCounts h{};
    for (const auto& s : data) ++h[static_cast<std::size_t>(s.label - 1)];
    return h;
}

Dataset generate_unbalanced(std::size_t count, std::uint64_t seed, const JointLimits& lim) {
    Rng rng(seed);
    Dataset out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        LabeledSample s;
        s.posture = sample_posture(rng, lim);
        s.context = sample_context(rng);
        s.label = rula(s.posture, s.context).grand;
        out.push_back(s);
    }
    return out;
}

Dataset generate_balanced(const DatasetSpec& spec, const JointLimits& lim) {
    spec.validate();
    lim.validate();
    const auto quota = static_cast<std::size_t>(
        std::ceil(spec.per_label_min_fraction * static_cast<double>(spec.total_count) - 1e-9));

    // Split totals and quotas over shards; fall back to one shard when a small
    // shard could not hold its share of every label.
    std::size_t shards = std::min(spec.shards, spec.total_count);
    std::vector<ShardPlan> plans;
    for (;;) {
        plans.assign(shards, {});
        bool ok = true;
        for (std::size_t s = 0; s < shards; ++s) {
            plans[s].total = spec.total_count / shards + (s < spec.total_count % shards ? 1 : 0);
            plans[s].quota = quota / shards + (s < quota % shards ? 1 : 0);
            plans[s].max_attempts = std::max<std::uint64_t>(1, spec.max_attempts / shards);
            if (plans[s].quota * kNumLabels > plans[s].total) ok = false;
        }
        if (ok || shards == 1) break;
        shards = 1;
    }

    std::vector<Dataset> parts(shards);
    detail::parallel_for(shards, [&](std::size_t s) {
        parts[s] = run_shard(plans[s], shard_seed(spec.rng_seed, s), lim);
    });
    Dataset out;
    out.reserve(spec.total_count);
    for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

Split split(std::span<const LabeledSample> data, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidInput("split fraction must be in (0,1)");
    Rng rng(seed);
    std::array<std::vector<std::size_t>, kNumLabels> by_label;
    for (std::size_t i = 0; i < data.size(); ++i) {
        by_label[static_cast<std::size_t>(data[i].label - 1)].push_back(i);
    }
    std::vector<std::size_t> train_idx, test_idx;
    for (auto& idx : by_label) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_train =
            static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + n_train);
        test_idx.insert(test_idx.end(), idx.begin() + n_train, idx.end());
    }
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    std::shuffle(test_idx.begin(), test_idx.end(), rng);
    Split out;
    out.train.reserve(train_idx.size());
    out.test.reserve(test_idx.size());
    for (auto i : train_idx) out.train.push_back(data[i]);
    for (auto i : test_idx) out.test.push_back(data[i]);
    return out;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const LabeledSample> data,
                                                       std::size_t k, std::uint64_t seed) {
    if (k == 0) throw InvalidInput("k_folds must be at least 1");
    Rng rng(seed);
    std::array<std::vector<std::size_t>, kNumLabels> by_label;
    for (std::size_t i = 0; i < data.size(); ++i) {
        by_label[static_cast<std::size_t>(data[i].label - 1)].push_back(i);
    }
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t offset = 0;  // continue round-robin across classes so totals stay balanced
    for (auto& idx : by_label) {
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t j = 0; j < idx.size(); ++j) folds[(offset + j) % k].push_back(idx[j]);
        offset += idx.size();
    }
    return folds;
}

void write_dataset(const std::filesystem::path& path, std::span<const LabeledSample> data,
                   const DatasetHeaderInfo& info) {
    io::json fields = io::json::array();
    for (std::size_t i = 0; i < kNumJoints; ++i) {
        fields.push_back({{"name", joint_name(static_cast<Joint>(i))}, {"type", "f64"},
                          {"unit", "rad"}});
    }
    fields.push_back({{"name", "arm_load_kg"}, {"type", "f64"}, {"unit", "kg"}});
    fields.push_back({{"name", "body_load_kg"}, {"type", "f64"}, {"unit", "kg"}});
    fields.push_back({{"name", "neck_angle_deg"}, {"type", "f64"}, {"unit", "deg"}});
    fields.push_back({{"name", "arm_load_mode"}, {"type", "u8"}, {"unit", "enum"}});
    fields.push_back({{"name", "body_load_mode"}, {"type", "u8"}, {"unit", "enum"}});
    fields.push_back({{"name", "flags"}, {"type", "u16"}, {"unit", "bitfield"}});
    fields.push_back({{"name", "label"}, {"type", "u8"}, {"unit", "rula_grand"}});

    const LabelCounts hist = label_histogram(data);
    io::json header = {
        {"format", "dula-dataset"},
        {"schema_version", kDatasetSchemaVersion},
        {"byte_order", "little"},
        {"record_size", kDatasetRecordSize},
        {"count", data.size()},
        {"seed", info.seed},
        {"generator", info.generator},
        {"per_label_min_fraction", info.per_label_min_fraction},
        {"label_counts", hist},
        {"fields", fields},
        {"flag_bits", kFlagNames},
        {"load_modes", {"intermittent", "static_or_repeated", "shock"}},
    };
    const std::string header_text = header.dump();

    std::string buf;
    buf.reserve(12 + header_text.size() + data.size() * kDatasetRecordSize);
    buf.append(kMagic, sizeof kMagic);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(header_text.size()));
    buf += header_text;
    for (const auto& s : data) {
        for (double a : s.posture.angles) put<double>(buf, a);
        put<double>(buf, s.context.arm_load_kg);
        put<double>(buf, s.context.body_load_kg);
        put<double>(buf, s.context.neck_angle_deg);
        put<std::uint8_t>(buf, static_cast<std::uint8_t>(s.context.arm_load_mode));
        put<std::uint8_t>(buf, static_cast<std::uint8_t>(s.context.body_load_mode));
        put<std::uint16_t>(buf, pack_flags(s.context));
        put<std::uint8_t>(buf, static_cast<std::uint8_t>(s.label));
    }
    io::write_file_atomic(path, buf);
}

Dataset read_dataset(const std::filesystem::path& path) {
    const std::string bytes = io::read_file(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw FormatError(path.string() + ": not a dataset file");
    }
    const char* p = bytes.data() + 8;
    const auto header_len = get<std::uint32_t>(p);
    if (12 + static_cast<std::size_t>(header_len) > bytes.size()) {
        throw FormatError(path.string() + ": truncated header");
    }
    io::json header;
    try {
        header = io::json::parse(std::string_view(p, header_len));
    } catch (const io::json::parse_error& e) {
        throw FormatError(path.string() + ": bad header: " + e.what());
    }
    p += header_len;
    if (header.value("schema_version", 0) != kDatasetSchemaVersion) {
        throw FormatError(path.string() + ": unsupported schema_version");
    }
    if (header.value("record_size", std::size_t{0}) != kDatasetRecordSize) {
        throw FormatError(path.string() + ": unexpected record size");
    }
    const auto count = header.at("count").get<std::size_t>();
    const std::size_t body = bytes.size() - 12 - header_len;
    if (body != count * kDatasetRecordSize) {
        throw FormatError(path.string() + ": record count does not match file size");
    }
    Dataset out(count);
    for (auto& s : out) {
        for (double& a : s.posture.angles) a = get<double>(p);
        s.context.arm_load_kg = get<double>(p);
        s.context.body_load_kg = get<double>(p);
        s.context.neck_angle_deg = get<double>(p);
        const auto arm_mode = get<std::uint8_t>(p);
        const auto body_mode = get<std::uint8_t>(p);
        if (arm_mode > 2 || body_mode > 2) throw FormatError(path.string() + ": bad load mode");
        s.context.arm_load_mode = static_cast<LoadMode>(arm_mode);
        s.context.body_load_mode = static_cast<LoadMode>(body_mode);
        unpack_flags(get<std::uint16_t>(p), s.context);
        s.label = get<std::uint8_t>(p);
        if (s.label < 1 || s.label > kNumLabels) throw FormatError(path.string() + ": bad label");
    }
    return out;
}

void write_dataset_csv(const std::filesystem::path& path, std::span<const LabeledSample> data) {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t i = 0; i < kNumJoints; ++i) out << joint_name(static_cast<Joint>(i)) << ',';
    out << "arm_load_kg,arm_load_mode,body_load_kg,body_load_mode,neck_angle_deg";
    for (const char* f : kFlagNames) out << ',' << f;
    out << ",label\n";
    for (const auto& s : data) {
        for (double a : s.posture.angles) out << a << ',';
        const TaskContext& c = s.context;
        out << c.arm_load_kg << ',' << load_mode_name(c.arm_load_mode) << ',' << c.body_load_kg
            << ',' << load_mode_name(c.body_load_mode) << ',' << c.neck_angle_deg;
        const std::array<bool, 9> f = {c.arm_static_or_repeated, c.body_static_or_repeated,
                                       c.neck_twist,             c.neck_side_bend,
                                       c.legs_and_feet_supported, c.arm_supported_or_leaning,
                                       c.shoulder_raised,        c.working_across_midline,
                                       c.wrist_bent_from_midline};
        for (bool b : f) out << ',' << (b ? 1 : 0);
        out << ',' << s.label << '\n';
    }
    io::write_file_atomic(path, out.str());
}

}  // namespace dula
