#include "model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace greenleaf {

void validate_head_config(const HeadConfig& cfg) {
    if (cfg.fc1_units < 1 || cfg.fc2_units < 1)
        fail(ErrorKind::parameter, "head: fc units must be >= 1, got ", cfg.fc1_units, "/",
             cfg.fc2_units);
    if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0)
        fail(ErrorKind::parameter, "head: dropout rate must lie in [0,1), got ", cfg.dropout_rate);
    if (cfg.l2_lambda < 0.0)
        fail(ErrorKind::parameter, "head: l2 lambda must be >= 0, got ", cfg.l2_lambda);
}

ModelGraph::ModelGraph(std::string name, int num_classes, int resolution, double width_scale,
                       std::vector<LayerPtr> layers)
    : name_(std::move(name)),
      num_classes_(num_classes),
      resolution_(resolution),
      width_scale_(width_scale),
      layers_(std::move(layers)) {
    for (auto& l : layers_) l->collect(params_, buffers_);
    audit_wiring();
}

Tensor ModelGraph::forward(Tape* tape, const Tensor& batch, Mode mode, Rng* dropout_rng) {
    const Shape bs = batch.shape();
    if (bs.c != 3)
        fail(ErrorKind::dimension, name_, ": expected 3 input channels, got ", bs.c);
    if (bs.h != resolution_ || bs.w != resolution_)
        fail(ErrorKind::dimension, name_, ": input resolution ", bs.h, "x", bs.w,
             " does not match the model's ", resolution_, "x", resolution_);
    Tensor x = batch;
    for (auto& l : layers_) x = l->forward(tape, x, mode, dropout_rng);
    return x;
}

std::int64_t ModelGraph::parameter_count() const {
    std::int64_t total = 0;
    for (const Param* p : params_)
        if (p->value.requires_grad()) total += p->value.size();
    return total;
}

std::int64_t ModelGraph::flops() const {
    std::int64_t total = 0;
    int h = resolution_, w = resolution_;
    for (const auto& l : layers_) {
        const LayerCost c = l->cost(h, w);
        total += c.flops;
        h = c.out_h;
        w = c.out_w;
    }
    return total;
}

void ModelGraph::audit_wiring() const {
    for (std::size_t i = 1; i < layers_.size(); ++i)
        if (layers_[i - 1]->out_channels() != layers_[i]->in_channels())
            fail(ErrorKind::configuration, name_, ": layer ", i - 1, " (",
                 layers_[i - 1]->kind(), ") emits ", layers_[i - 1]->out_channels(),
                 " channels but layer ", i, " (", layers_[i]->kind(), ") expects ",
                 layers_[i]->in_channels());
    std::set<std::string> seen;
    for (const Param* p : params_)
        if (!seen.insert(p->name).second)
            fail(ErrorKind::configuration, name_, ": duplicate parameter name ", p->name);
    for (const NamedBuffer& b : buffers_)
        if (!seen.insert(b.name).second)
            fail(ErrorKind::configuration, name_, ": duplicate buffer name ", b.name);
}

void ModelGraph::zero_grads() {
    for (Param* p : params_) p->value.clear_grad();
}

ModelSnapshot ModelGraph::snapshot() const {
    ModelSnapshot snap;
    snap.params.reserve(params_.size());
    for (const Param* p : params_) snap.params.push_back(p->value.values());
    snap.buffers.reserve(buffers_.size());
    for (const NamedBuffer& b : buffers_) snap.buffers.push_back(*b.values);
    return snap;
}

void ModelGraph::restore(const ModelSnapshot& snap) {
    if (snap.params.size() != params_.size() || snap.buffers.size() != buffers_.size())
        fail(ErrorKind::argument, name_, ": snapshot does not belong to this model");
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->value.values() = snap.params[i];
    for (std::size_t i = 0; i < buffers_.size(); ++i) *buffers_[i].values = snap.buffers[i];
}

void ModelGraph::set_trainable_base(bool trainable) {
    for (Param* p : params_)
        if (p->name.rfind("head.", 0) != 0) p->value.set_requires_grad(trainable);
}

// ---------------------------------------------------------------------------
// Weight container. Layout, all little endian:
//   magic "GLW1"
//   repeated records until EOF:
//     u32 name_len | name bytes | u32 rank | u32 dims[rank] | f32 values
// ---------------------------------------------------------------------------

namespace {

void write_u32le(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>((v >> 8) & 0xff),
                                static_cast<unsigned char>((v >> 16) & 0xff),
                                static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32le(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
        static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
    return true;
}

void write_record(std::ostream& os, const std::string& name, const std::vector<int>& dims,
                  const double* values, std::int64_t count) {
    write_u32le(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32le(os, static_cast<std::uint32_t>(dims.size()));
    for (const int d : dims) write_u32le(os, static_cast<std::uint32_t>(d));
    for (std::int64_t i = 0; i < count; ++i)
        write_u32le(os, std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
}

struct WeightRecord {
    std::vector<int> dims;
    std::vector<double> values;
};

std::map<std::string, WeightRecord> read_weight_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::io, "cannot open weight file ", path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "GLW1", 4) != 0)
        fail(ErrorKind::decode, path, ": not a GLW1 weight file");
    std::map<std::string, WeightRecord> records;
    std::uint32_t name_len = 0;
    while (read_u32le(is, name_len)) {
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            fail(ErrorKind::decode, path, ": truncated record name");
        std::uint32_t rank = 0;
        if (!read_u32le(is, rank)) fail(ErrorKind::decode, path, ": truncated record ", name);
        WeightRecord rec;
        std::int64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            std::uint32_t d = 0;
            if (!read_u32le(is, d)) fail(ErrorKind::decode, path, ": truncated dims of ", name);
            rec.dims.push_back(static_cast<int>(d));
            count *= d;
        }
        rec.values.resize(static_cast<std::size_t>(count));
        for (std::int64_t i = 0; i < count; ++i) {
            std::uint32_t bits = 0;
            if (!read_u32le(is, bits)) fail(ErrorKind::decode, path, ": truncated values of ", name);
            rec.values[static_cast<std::size_t>(i)] = std::bit_cast<float>(bits);
        }
        if (!records.emplace(name, std::move(rec)).second)
            fail(ErrorKind::decode, path, ": duplicate tensor ", name);
    }
    return records;
}

} // namespace

void ModelGraph::save_weights(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorKind::io, "cannot write weight file ", path);
    os.write("GLW1", 4);
    for (const Param* p : params_)
        write_record(os, p->name, p->logical_dims, p->value.data(), p->value.size());
    for (const NamedBuffer& b : buffers_)
        write_record(os, b.name, {static_cast<int>(b.values->size())}, b.values->data(),
                     static_cast<std::int64_t>(b.values->size()));
    if (!os) fail(ErrorKind::io, "failed writing weight file ", path);
}

void ModelGraph::load_weights(const std::string& path) {
    auto records = read_weight_file(path);
    auto take = [&](const std::string& name, const std::vector<int>& dims) {
        auto it = records.find(name);
        if (it == records.end())
            fail(ErrorKind::decode, path, ": tensor ", name, " required by ", name_, " is missing");
        if (it->second.dims != dims) {
            std::string want, got;
            for (int d : dims) want += concat(d, ",");
            for (int d : it->second.dims) got += concat(d, ",");
            fail(ErrorKind::decode, path, ": tensor ", name, " has dims [", got,
                 "] but the model expects [", want, "]");
        }
        std::vector<double> values = std::move(it->second.values);
        records.erase(it);
        return values;
    };
    // Stage everything before mutating so a mismatch cannot leave the model
    // half loaded.
    std::vector<std::vector<double>> staged_params, staged_buffers;
    for (const Param* p : params_) staged_params.push_back(take(p->name, p->logical_dims));
    for (const NamedBuffer& b : buffers_)
        staged_buffers.push_back(take(b.name, {static_cast<int>(b.values->size())}));
    if (!records.empty())
        fail(ErrorKind::decode, path, ": tensor ", records.begin()->first,
             " does not belong to model ", name_);
    for (std::size_t i = 0; i < params_.size(); ++i)
        params_[i]->value.values() = std::move(staged_params[i]);
    for (std::size_t i = 0; i < buffers_.size(); ++i) *buffers_[i].values = std::move(staged_buffers[i]);
}

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------

std::vector<LayerPtr> attach_head(int feature_dim, const HeadConfig& cfg, int num_classes,
                                  Rng& rng) {
    if (feature_dim < 1)
        fail(ErrorKind::parameter, "attach_head: feature dim must be >= 1, got ", feature_dim);
    validate_head_config(cfg);
    std::vector<LayerPtr> layers;
    layers.push_back(std::make_unique<DenseLayer>("head.fc1", feature_dim, cfg.fc1_units, rng));
    layers.push_back(std::make_unique<ActivationLayer>(cfg.fc1_units, Act::relu));
    layers.push_back(std::make_unique<DropoutLayer>(cfg.fc1_units, cfg.dropout_rate));
    layers.push_back(std::make_unique<DenseLayer>("head.fc2", cfg.fc1_units, cfg.fc2_units, rng));
    layers.push_back(std::make_unique<ActivationLayer>(cfg.fc2_units, Act::relu));
    layers.push_back(std::make_unique<DenseLayer>("head.out", cfg.fc2_units, num_classes, rng));
    return layers;
}

std::int64_t head_parameter_count(int feature_dim, const HeadConfig& cfg, int num_classes) {
    return static_cast<std::int64_t>(feature_dim) * cfg.fc1_units + cfg.fc1_units +
           static_cast<std::int64_t>(cfg.fc1_units) * cfg.fc2_units + cfg.fc2_units +
           static_cast<std::int64_t>(cfg.fc2_units) * num_classes + num_classes;
}

namespace {

int scaled_width(int base, double scale, int divisor) {
    if (scale == 1.0) return base;
    return round_channels(base * scale, divisor);
}

struct MbStage {
    double t;
    int c;
    int n;
    int s;
    int k;
};

// Width of each backbone's final fully connected layer. The published
// backbones all end in a 1000-unit classifier; it is kept as an embedding
// layer and the task head is attached after it, which is also what the
// models' headline parameter counts include.
constexpr int kEmbedWidth = 1000;

void append_embedding_and_head(std::vector<LayerPtr>& layers, int gap_width, double width_scale,
                               const HeadConfig& head, int num_classes, Rng& rng) {
    const int embed = scaled_width(kEmbedWidth, width_scale, 8);
    layers.push_back(std::make_unique<GlobalAvgPoolLayer>(gap_width));
    layers.push_back(std::make_unique<DenseLayer>("embed.fc", gap_width, embed, rng));
    layers.push_back(std::make_unique<ActivationLayer>(embed, Act::relu));
    for (auto& l : attach_head(embed, head, num_classes, rng)) layers.push_back(std::move(l));
}

ModelGraph build_mbconv_arch(const std::string& name, const std::vector<MbStage>& stages,
                             int stem_width, int top_width, Act act, double se_ratio,
                             const BuildOptions& opts) {
    Rng rng(opts.seed);
    std::vector<LayerPtr> layers;
    const int stem = scaled_width(stem_width, opts.width_scale, 8);
    layers.push_back(std::make_unique<Conv2dLayer>("stem.conv", 3, stem, 3, 2, 1, 1, false, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("stem.bn", stem));
    layers.push_back(std::make_unique<ActivationLayer>(stem, act));

    int in = stem;
    for (std::size_t si = 0; si < stages.size(); ++si) {
        const MbStage& st = stages[si];
        const int out = scaled_width(st.c, opts.width_scale, 8);
        for (int bi = 0; bi < st.n; ++bi) {
            BlockConfig cfg;
            cfg.in_channels = in;
            cfg.out_channels = out;
            cfg.stride = bi == 0 ? st.s : 1;
            cfg.expansion = st.t;
            cfg.kernel = st.k;
            cfg.se_ratio = se_ratio;
            layers.push_back(std::make_unique<InvertedResidualBlock>(
                concat("stage", si + 1, ".block", bi), cfg, act, rng));
            in = out;
        }
    }
    const int top = scaled_width(top_width, opts.width_scale, 8);
    layers.push_back(std::make_unique<Conv2dLayer>("top.conv", in, top, 1, 1, 0, 1, false, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("top.bn", top));
    layers.push_back(std::make_unique<ActivationLayer>(top, act));
    append_embedding_and_head(layers, top, opts.width_scale, opts.head, opts.num_classes, rng);
    return ModelGraph(name, opts.num_classes, opts.resolution, opts.width_scale, std::move(layers));
}

ModelGraph build_efficientnet_b0(const BuildOptions& opts) {
    // baseline stage table; the compound scaler instantiates the B0 point
    // (phi = 0) of the family
    static const std::vector<MbStage> base = {
        {1, 16, 1, 1, 3}, {6, 24, 2, 2, 3}, {6, 40, 2, 2, 5},  {6, 80, 3, 2, 3},
        {6, 112, 3, 1, 5}, {6, 192, 4, 2, 5}, {6, 320, 1, 1, 3},
    };
    std::vector<int> depths, widths;
    for (const MbStage& st : base) {
        depths.push_back(st.n);
        widths.push_back(st.c);
    }
    const ScaledDims scaled = compound_scale(ScalingCoefficients{}, depths, widths, 224);
    std::vector<MbStage> stages = base;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        stages[i].n = scaled.depths[i];
        stages[i].c = scaled.widths[i];
    }
    return build_mbconv_arch("efficientnet_b0", stages, 32, 1280, Act::swish, 0.25, opts);
}

ModelGraph build_mobilenet_v2(const BuildOptions& opts) {
    static const std::vector<MbStage> stages = {
        {1, 16, 1, 1, 3}, {6, 24, 2, 2, 3}, {6, 32, 3, 2, 3},  {6, 64, 4, 2, 3},
        {6, 96, 3, 1, 3}, {6, 160, 3, 2, 3}, {6, 320, 1, 1, 3},
    };
    return build_mbconv_arch("mobilenet_v2", stages, 32, 1280, Act::relu6, 0.0, opts);
}

ModelGraph build_shufflenet(const BuildOptions& opts) {
    // g=3 unit with the stage table taken at 0.75x the published g=3 widths,
    // which puts the default build at about 1.4M parameters.
    struct ShuffleStage {
        int c;
        int n;
    };
    static const std::vector<ShuffleStage> stages = {{180, 4}, {360, 8}, {720, 4}};
    constexpr int kGroups = 3;

    Rng rng(opts.seed);
    std::vector<LayerPtr> layers;
    // stem width stays divisible by 6 so the grouped stage-2 widths remain
    // divisible by the group count after the stride-2 concat
    const int stem = scaled_width(18, opts.width_scale, 6);
    layers.push_back(std::make_unique<Conv2dLayer>("stem.conv", 3, stem, 3, 2, 1, 1, false, rng));
    layers.push_back(std::make_unique<BatchNormLayer>("stem.bn", stem));
    layers.push_back(std::make_unique<ActivationLayer>(stem, Act::relu));
    layers.push_back(std::make_unique<MaxPoolLayer>(stem, 3, 2, 1));

    int in = stem;
    for (std::size_t si = 0; si < stages.size(); ++si) {
        const int out = scaled_width(stages[si].c, opts.width_scale, 4 * kGroups);
        for (int bi = 0; bi < stages[si].n; ++bi) {
            BlockConfig cfg;
            cfg.in_channels = in;
            cfg.out_channels = out;
            cfg.stride = bi == 0 ? 2 : 1;
            cfg.groups = kGroups;
            // the opening unit sees the narrow stem, too narrow to split
            const int first_groups = (si == 0 && bi == 0) ? 1 : kGroups;
            layers.push_back(std::make_unique<ShuffleUnitBlock>(
                concat("stage", si + 2, ".unit", bi), cfg, first_groups, rng));
            in = out;
        }
    }
    append_embedding_and_head(layers, in, opts.width_scale, opts.head, opts.num_classes, rng);
    return ModelGraph("shufflenet", opts.num_classes, opts.resolution, opts.width_scale,
                      std::move(layers));
}

} // namespace

std::vector<std::string> known_architectures() {
    return {"efficientnet_b0", "mobilenet_v2", "shufflenet"};
}

ModelGraph build_model(const std::string& arch, const BuildOptions& opts) {
    if (opts.num_classes < 2)
        fail(ErrorKind::configuration, "build_model: num_classes must be >= 2, got ",
             opts.num_classes);
    if (opts.width_scale <= 0.0)
        fail(ErrorKind::configuration, "build_model: width_scale must be positive, got ",
             opts.width_scale);
    if (opts.resolution < 32)
        fail(ErrorKind::configuration, "build_model: resolution must be >= 32, got ",
             opts.resolution);
    validate_head_config(opts.head);

    ModelGraph model = [&] {
        if (arch == "efficientnet_b0") return build_efficientnet_b0(opts);
        if (arch == "mobilenet_v2") return build_mobilenet_v2(opts);
        if (arch == "shufflenet") return build_shufflenet(opts);
        fail(ErrorKind::configuration, "build_model: unknown architecture '", arch,
             "' (known: efficientnet_b0, mobilenet_v2, shufflenet)");
    }();
    if (!opts.trainable_base) model.set_trainable_base(false);
    return model;
}

} // namespace greenleaf
