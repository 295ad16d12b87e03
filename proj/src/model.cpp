#include "clcsca/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "json.hpp"

namespace clcsca {

namespace {

using nlohmann::json;

// ---- config ----------------------------------------------------------------

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ContractError("config: unknown field \"" + key + "\" in " + where);
    }
}

LayerSpec layer_from_json(const json& j) {
    require_keys(j, {"radius", "k", "mlp"}, "layer");
    LayerSpec spec;
    spec.radius = j.at("radius").get<double>();
    spec.k = j.at("k").get<std::size_t>();
    spec.mlp = j.at("mlp").get<std::vector<std::size_t>>();
    return spec;
}

json layer_to_json(const LayerSpec& spec) {
    return json{{"radius", spec.radius}, {"k", spec.k}, {"mlp", spec.mlp}};
}

}  // namespace

Ablation ablation_from_string(const std::string& s) {
    if (s == "baseline") return Ablation::baseline;
    if (s == "clca") return Ablation::clca;
    if (s == "csca") return Ablation::csca;
    if (s == "full") return Ablation::full;
    throw ContractError("ablation: expected baseline|clca|csca|full, got \"" + s + "\"");
}

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::baseline: return "baseline";
        case Ablation::clca: return "clca";
        case Ablation::csca: return "csca";
        default: return "full";
    }
}

void NetworkConfig::validate() const {
    if (task != "classification" && task != "segmentation") {
        throw ContractError("config: task must be classification or segmentation, got \"" + task + "\"");
    }
    if (num_classes < 2) throw ContractError("config: num_classes must be at least 2");
    if (input_points < paths[0].resolution) {
        throw ContractError("config: input_points " + std::to_string(input_points) +
                            " below path 0 resolution " + std::to_string(paths[0].resolution));
    }
    if (!(paths[0].resolution > paths[1].resolution && paths[1].resolution > paths[2].resolution)) {
        throw ContractError("config: path resolutions must strictly decrease");
    }
    for (const PathConfig& p : paths) p.validate(extra_attrs);
    const std::size_t level_c = paths[0].out_channels();
    for (const PathConfig& p : paths) {
        if (p.out_channels() != level_c) {
            throw ContractError("config: all paths must share one output width");
        }
    }
    if (clca_channels == 0 || clca_channels % 4 != 0) {
        throw ContractError("config: clca_channels must be a positive multiple of 4");
    }
    if (csca_channels == 0 || csca_channels % 4 != 0) {
        throw ContractError("config: csca_channels must be a positive multiple of 4");
    }
    if (upsample_mlp.size() < 2) {
        throw ContractError("config: upsample_mlp needs input and output widths");
    }
    const std::size_t up_in = clca_channels + (is_segmentation() ? 3 : 0);
    if (upsample_mlp.front() != up_in) {
        throw ContractError("config: upsample_mlp input width " + std::to_string(upsample_mlp.front()) +
                            ", expected " + std::to_string(up_in));
    }
    if (upsample_mlp.back() != csca_channels) {
        throw ContractError("config: upsample_mlp must end at csca_channels");
    }
    for (std::size_t h : head) {
        if (h == 0) throw ContractError("config: head widths must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ContractError("config: dropout must lie in [0, 1)");
    }
}

NetworkConfig network_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    require_keys(j,
                 {"task", "num_classes", "input_points", "paths", "clca_channels", "csca_channels",
                  "upsample_mlp", "head", "dropout", "extra_attrs", "ablation",
                  "scale_cross_attention", "zero_init_values", "seg_sum_loss", "fps_random_start"},
                 "network config");
    NetworkConfig cfg;
    try {
        cfg.task = j.at("task").get<std::string>();
        cfg.num_classes = j.at("num_classes").get<std::size_t>();
        cfg.input_points = j.at("input_points").get<std::size_t>();
        const json& paths = j.at("paths");
        if (!paths.is_array() || paths.size() != 3) {
            throw ContractError("config: paths must be an array of 3 entries");
        }
        for (std::size_t p = 0; p < 3; ++p) {
            require_keys(paths[p], {"resolution", "layers"}, "path");
            cfg.paths[p].resolution = paths[p].at("resolution").get<std::size_t>();
            for (const json& l : paths[p].at("layers")) cfg.paths[p].layers.push_back(layer_from_json(l));
        }
        cfg.clca_channels = j.at("clca_channels").get<std::size_t>();
        cfg.csca_channels = j.at("csca_channels").get<std::size_t>();
        cfg.upsample_mlp = j.at("upsample_mlp").get<std::vector<std::size_t>>();
        cfg.head = j.at("head").get<std::vector<std::size_t>>();
        cfg.dropout = j.value("dropout", 0.4);
        cfg.extra_attrs = j.value("extra_attrs", std::size_t{0});
        cfg.ablation = ablation_from_string(j.value("ablation", "full"));
        cfg.scale_cross_attention = j.value("scale_cross_attention", true);
        cfg.zero_init_values = j.value("zero_init_values", false);
        cfg.seg_sum_loss = j.value("seg_sum_loss", false);
        cfg.fps_random_start = j.value("fps_random_start", false);
    } catch (const json::exception& e) {
        throw ContractError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string to_json_text(const NetworkConfig& cfg) {
    json paths = json::array();
    for (const PathConfig& p : cfg.paths) {
        json layers = json::array();
        for (const LayerSpec& l : p.layers) layers.push_back(layer_to_json(l));
        paths.push_back(json{{"resolution", p.resolution}, {"layers", layers}});
    }
    json j{{"task", cfg.task},
           {"num_classes", cfg.num_classes},
           {"input_points", cfg.input_points},
           {"paths", paths},
           {"clca_channels", cfg.clca_channels},
           {"csca_channels", cfg.csca_channels},
           {"upsample_mlp", cfg.upsample_mlp},
           {"head", cfg.head},
           {"dropout", cfg.dropout},
           {"extra_attrs", cfg.extra_attrs},
           {"ablation", to_string(cfg.ablation)},
           {"scale_cross_attention", cfg.scale_cross_attention},
           {"zero_init_values", cfg.zero_init_values},
           {"seg_sum_loss", cfg.seg_sum_loss},
           {"fps_random_start", cfg.fps_random_start}};
    return j.dump(2);
}

// ---- parameter schema --------------------------------------------------------

namespace {

bool uses_clca(Ablation a) { return a == Ablation::full || a == Ablation::clca; }
bool uses_csca(Ablation a) { return a == Ablation::full || a == Ablation::csca; }

void push_mlp(std::vector<ParamSpec>& out, const std::string& prefix,
              const std::vector<std::size_t>& chain) {
    for (std::size_t j = 0; j + 1 < chain.size(); ++j) {
        const std::string base = prefix + ".mlp" + std::to_string(j);
        out.push_back({base + ".w", {chain[j], chain[j + 1]}});
        out.push_back({base + ".b", {chain[j + 1]}});
    }
}

void push_attention(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t c,
                    bool self_role) {
    const std::size_t cp = c / 4;
    if (self_role) {
        out.push_back({prefix + ".wq", {c, cp}});
        out.push_back({prefix + ".wk", {c, cp}});
        out.push_back({prefix + ".wv", {c, c}});
    } else {
        out.push_back({prefix + ".w1", {c, cp}});
        out.push_back({prefix + ".w2", {c, cp}});
        out.push_back({prefix + ".w3", {c, c}});
    }
}

}  // namespace

std::vector<ParamSpec> param_schema(const NetworkConfig& cfg) {
    cfg.validate();
    std::vector<ParamSpec> out;
    const std::size_t level_c = cfg.paths[0].out_channels();
    for (std::size_t p = 0; p < 3; ++p) {
        const std::string path = "path" + std::to_string(p);
        for (std::size_t l = 0; l < 3; ++l) {
            push_mlp(out, path + ".layer" + std::to_string(l), cfg.paths[p].layers[l].mlp);
        }
        const std::string clca_p = "clca" + std::to_string(p);
        out.push_back({clca_p + ".lift.w", {level_c, cfg.clca_channels}});
        if (uses_clca(cfg.ablation)) {
            for (std::size_t v = 0; v < 3; ++v) {
                push_attention(out, clca_p + ".level" + std::to_string(v), cfg.clca_channels, true);
            }
            push_attention(out, clca_p + ".cross", cfg.clca_channels, false);
        }
        push_mlp(out, "up" + std::to_string(p), cfg.upsample_mlp);
    }
    if (uses_csca(cfg.ablation)) {
        push_attention(out, "csca.self", cfg.csca_channels, true);
        push_attention(out, "csca.cross", cfg.csca_channels, false);
    }
    std::vector<std::size_t> head_chain;
    head_chain.push_back(cfg.is_segmentation() ? cfg.csca_channels : 2 * cfg.csca_channels);
    for (std::size_t h : cfg.head) head_chain.push_back(h);
    head_chain.push_back(cfg.num_classes);
    push_mlp(out, "head", head_chain);
    std::sort(out.begin(), out.end(),
              [](const ParamSpec& a, const ParamSpec& b) { return a.name < b.name; });
    return out;
}

ModelParams init_params(const NetworkConfig& cfg, std::uint64_t seed) {
    ModelParams params;
    for (const ParamSpec& spec : param_schema(cfg)) {
        std::vector<double> values(shape_numel(spec.shape), 0.0);
        const bool is_bias = spec.name.ends_with(".b");
        const bool zeroed = cfg.zero_init_values &&
                            (spec.name.ends_with(".wv") || spec.name.ends_with(".w3"));
        if (!is_bias && !zeroed) {
            Rng rng = Rng::stream(seed, {"init", spec.name});
            const double bound = 1.0 / std::sqrt(static_cast<double>(spec.shape[0]));
            for (double& v : values) v = rng.uniform(-bound, bound);
        }
        Tensor t(spec.shape, std::move(values), true);
        params.emplace(spec.name, std::move(t));
    }
    return params;
}

ModelParams clone_params(const ModelParams& params) {
    ModelParams out;
    for (const auto& [name, t] : params) {
        Tensor c = t.detached();
        c.set_requires_grad(true);
        out.emplace(name, std::move(c));
    }
    return out;
}

void validate_params(const NetworkConfig& cfg, const ModelParams& params) {
    const auto schema = param_schema(cfg);
    for (const ParamSpec& spec : schema) {
        auto it = params.find(spec.name);
        if (it == params.end()) throw ContractError("params: missing \"" + spec.name + "\"");
        if (it->second.shape() != spec.shape) {
            throw ContractError("params: \"" + spec.name + "\" has shape " +
                                shape_str(it->second.shape()) + ", config wants " +
                                shape_str(spec.shape));
        }
    }
    if (params.size() != schema.size()) {
        for (const auto& [name, _] : params) {
            if (std::none_of(schema.begin(), schema.end(),
                             [&](const ParamSpec& s) { return s.name == name; })) {
                throw ContractError("params: unexpected \"" + name + "\"");
            }
        }
    }
}

// ---- forward ----------------------------------------------------------------

namespace {

AttentionParams self_params(const ParamMap& params, const std::string& prefix) {
    AttentionParams p;
    p.wq = param(params, prefix + ".wq");
    p.wk = param(params, prefix + ".wk");
    p.wv = param(params, prefix + ".wv");
    return p;
}

AttentionParams cross_params(const ParamMap& params, const std::string& prefix) {
    AttentionParams p;
    p.w1 = param(params, prefix + ".w1");
    p.w2 = param(params, prefix + ".w2");
    p.w3 = param(params, prefix + ".w3");
    return p;
}

Tensor dropout(const Tensor& x, double rate, Rng* rng) {
    if (rng == nullptr || rate <= 0.0) return x;
    std::vector<double> mask(x.size());
    const double inv_keep = 1.0 / (1.0 - rate);
    for (double& v : mask) v = rng->uniform() < rate ? 0.0 : inv_keep;
    return mul(x, Tensor(x.shape(), std::move(mask)));
}

// Pyramid -> per-path CLCA (or lift-sum) -> upsample -> CSCA (or sum).
Tensor fused_features(const PointCloud& pc, const NetworkConfig& cfg, const ModelParams& params,
                      Rng* fps_rng) {
    const auto pyramid =
        build_pyramid(pc, cfg.paths, params, cfg.fps_random_start ? fps_rng : nullptr);
    std::array<Tensor, 3> scales;
    for (std::size_t p = 0; p < 3; ++p) {
        const std::string clca_p = "clca" + std::to_string(p);
        Tensor f;
        if (uses_clca(cfg.ablation)) {
            ClcaParams cp;
            cp.lift = param(params, clca_p + ".lift.w");
            for (std::size_t v = 0; v < 3; ++v) {
                cp.level[v] = self_params(params, clca_p + ".level" + std::to_string(v));
            }
            cp.cross = cross_params(params, clca_p + ".cross");
            f = clca(pyramid[p], cp, cfg.scale_cross_attention);
        } else {
            f = level_sum(pyramid[p], param(params, clca_p + ".lift.w"));
        }
        const MlpParams up =
            collect_mlp(params, "up" + std::to_string(p), cfg.upsample_mlp.size() - 1);
        scales[p] = upsample(f, pyramid[p].points, pc.coords, up, cfg.is_segmentation());
    }
    if (uses_csca(cfg.ablation)) {
        CscaParams cp;
        cp.self = self_params(params, "csca.self");
        cp.cross = cross_params(params, "csca.cross");
        return csca(scales[0], scales[1], scales[2], cp, cfg.scale_cross_attention);
    }
    return add(add(scales[0], scales[1]), scales[2]);
}

Tensor head_forward(const Tensor& x, const NetworkConfig& cfg, const ModelParams& params,
                    Rng* dropout_rng) {
    Tensor h = x;
    for (std::size_t j = 0; j < cfg.head.size(); ++j) {
        const std::string base = "head.mlp" + std::to_string(j);
        h = relu(linear(h, param(params, base + ".w"), param(params, base + ".b")));
        h = dropout(h, cfg.dropout, dropout_rng);
    }
    const std::string last = "head.mlp" + std::to_string(cfg.head.size());
    return linear(h, param(params, last + ".w"), param(params, last + ".b"));
}

}  // namespace

Tensor classify_forward(const PointCloud& pc, const NetworkConfig& cfg, const ModelParams& params,
                        Rng* dropout_rng, Rng* fps_rng) {
    if (cfg.is_segmentation()) throw ContractError("classify_forward: config task is segmentation");
    Tensor fused = fused_features(pc, cfg, params, fps_rng);
    const std::size_t d = fused.cols();
    Tensor global = concat_cols(reshape(max_over_rows(fused), {1, d}),
                                reshape(mean_over_rows(fused), {1, d}));
    return head_forward(global, cfg, params, dropout_rng);
}

Tensor segment_forward(const PointCloud& pc, const NetworkConfig& cfg, const ModelParams& params,
                       Rng* dropout_rng, Rng* fps_rng) {
    if (!cfg.is_segmentation()) throw ContractError("segment_forward: config task is classification");
    Tensor fused = fused_features(pc, cfg, params, fps_rng);
    return head_forward(fused, cfg, params, dropout_rng);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const NetworkConfig& cfg) {
    const Reduction red =
        cfg.is_segmentation() && cfg.seg_sum_loss ? Reduction::sum : Reduction::mean;
    return cross_entropy_rows(logits, targets, red);
}

std::vector<int> predict(const Tensor& logits) {
    if (logits.rank() != 2) {
        throw ContractError("predict: expected rank-2 logits, got " + shape_str(logits.shape()));
    }
    const std::size_t m = logits.rows(), c = logits.cols();
    std::vector<int> out(m);
    const double* v = logits.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (v[i * c + j] > v[i * c + best]) best = j;
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

// ---- checkpoint io ------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'C', 'L', 'C', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(d));
    std::memcpy(&bits, &d, sizeof(bits));
    put_u64(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t off = 0;

    void need(std::size_t n, const char* what) {
        if (off + n > buf.size()) {
            throw FormatError(std::string("checkpoint: truncated reading ") + what, off);
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
        off += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
        off += 8;
        return v;
    }
    double f64(const char* what) {
        const std::uint64_t bits = u64(what);
        double d;
        std::memcpy(&d, &bits, sizeof(d));
        return d;
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = buf.substr(off, n);
        off += n;
        return s;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open \"" + path + "\" for reading");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

void write_file(const std::string& path, const std::string& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open \"" + path + "\" for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("write failed for \"" + path + "\"");
}

}  // namespace

void save_params(const std::string& path, const ModelParams& params) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {  // std::map order = sorted names
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf.append(name);
        put_u32(buf, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put_u64(buf, d);
        for (double v : t.values()) put_f64(buf, v);
    }
    write_file(path, buf);
}

ModelParams load_params(const std::string& path) {
    const std::string buf = read_file(path);
    Reader r{buf};
    const std::string magic = r.bytes(4, "magic");
    if (std::string(kMagic, 4) != magic) throw FormatError("checkpoint: bad magic", 0);
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version), 4);
    }
    const std::uint32_t count = r.u32("tensor count");
    ModelParams params;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32("name length");
        if (name_len == 0 || name_len > 4096) {
            throw FormatError("checkpoint: implausible name length " + std::to_string(name_len),
                              r.off - 4);
        }
        const std::string name = r.bytes(name_len, "name");
        const std::uint32_t rank = r.u32("rank");
        if (rank > 8) throw FormatError("checkpoint: implausible rank", r.off - 4);
        Shape shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<std::size_t>(r.u64("dimension"));
            if (shape[d] == 0 || shape[d] > (1u << 30) || numel > (1u << 30)) {
                throw FormatError("checkpoint: implausible shape", r.off - 8);
            }
            numel *= shape[d];
        }
        std::vector<double> values(numel);
        for (std::size_t v = 0; v < numel; ++v) values[v] = r.f64("values");
        if (params.count(name)) throw FormatError("checkpoint: duplicate tensor \"" + name + "\"", r.off);
        Tensor t(std::move(shape), std::move(values), true);
        params.emplace(name, std::move(t));
    }
    if (r.off != buf.size()) throw FormatError("checkpoint: trailing bytes", r.off);
    return params;
}

ModelParams load_params(const std::string& path, const NetworkConfig& cfg) {
    ModelParams params = load_params(path);
    validate_params(cfg, params);
    return params;
}

}  // namespace clcsca
