#include "pm2/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "pm2/random.hpp"
#include "pm2/text.hpp"

namespace pm2 {

namespace {

std::vector<std::size_t> layer_widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(out);
    return w;
}

Mlp init_mlp(const std::vector<std::size_t>& widths, Rng& rng) {
    Mlp mlp;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const std::size_t fan_in = widths[i], fan_out = widths[i + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Layer layer{Array::matrix(fan_in, fan_out), Array({fan_out})};
        for (double& w : layer.weight.data) {
            // uniform() is in [0, 1), so the draw stays strictly inside the bound
            w = bound * (2.0 * rng.uniform() - 1.0);
            if (w == -bound) w = 0.0;
        }
        mlp.push_back(std::move(layer));
    }
    return mlp;
}

void check_width(const Array& batch, std::size_t expected, const char* what) {
    if (batch.rank() != 2 || batch.shape[1] != expected) {
        throw std::invalid_argument(std::string(what) + ": expected a [b x " + std::to_string(expected) +
                                    "] batch, got " + shape_string(batch.shape));
    }
}

std::string join_dims(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

}  // namespace

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v < 1) throw std::invalid_argument(std::string("ModelConfig: ") + name + " must be >= 1");
    };
    positive(feature_dim, "feature_dim");
    positive(embed_dim, "embed_dim");
    positive(n_aus, "n_aus");
    for (std::size_t h : hidden_dims) positive(h, "hidden_dims");
    for (std::size_t h : classifier_hidden) positive(h, "classifier_hidden");
}

bool ModelParams::all_finite() const {
    for (const Mlp* m : {&encoder, &classifier1, &classifier2}) {
        for (const Layer& l : *m) {
            if (!l.weight.all_finite() || !l.bias.all_finite()) return false;
        }
    }
    return true;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    ModelParams p;
    p.config = config;
    p.encoder = init_mlp(layer_widths(config.feature_dim, config.hidden_dims, config.embed_dim), rng);
    const auto head = layer_widths(config.embed_dim, config.classifier_hidden, config.n_aus);
    p.classifier1 = init_mlp(head, rng);
    p.classifier2 = init_mlp(head, rng);
    return p;
}

Head head_from_id(int id) {
    if (id == 1) return Head::First;
    if (id == 2) return Head::Second;
    throw std::invalid_argument("classify: head id must be 1 or 2, got " + std::to_string(id));
}

MlpVars bind_mlp(ad::Graph& g, const Mlp& mlp, bool trainable) {
    MlpVars vars;
    for (const Layer& l : mlp) {
        vars.weights.push_back(trainable ? g.variable(l.weight) : g.constant(l.weight));
        vars.biases.push_back(trainable ? g.variable(l.bias) : g.constant(l.bias));
    }
    return vars;
}

ad::Var mlp_forward(ad::Graph& g, const MlpVars& mlp, ad::Var x) {
    ad::Var h = x;
    for (std::size_t i = 0; i < mlp.weights.size(); ++i) {
        h = g.add(g.matmul(h, mlp.weights[i]), mlp.biases[i]);
        if (i + 1 < mlp.weights.size()) h = g.relu(h);
    }
    return h;
}

ad::Var head_forward(ad::Graph& g, const MlpVars& head, ad::Var embeddings) {
    return g.sigmoid(mlp_forward(g, head, embeddings));
}

Array encode(const ModelParams& params, const Array& batch) {
    check_width(batch, params.config.feature_dim, "encode");
    ad::Graph g;
    const MlpVars enc = bind_mlp(g, params.encoder, false);
    return g.value(mlp_forward(g, enc, g.constant(batch)));
}

Array classify(const ModelParams& params, const Array& embeddings, Head head) {
    check_width(embeddings, params.config.embed_dim, "classify");
    if (head != Head::First && head != Head::Second) throw std::invalid_argument("classify: invalid head");
    ad::Graph g;
    const MlpVars h = bind_mlp(g, params.head(head), false);
    return g.value(head_forward(g, h, g.constant(embeddings)));
}

Prediction combine_heads(const Array& p1, const Array& p2) {
    if (p1.shape != p2.shape) {
        throw std::invalid_argument("predict: head outputs differ in shape " + shape_string(p1.shape) + " vs " +
                                    shape_string(p2.shape));
    }
    Prediction out{Array(p1.shape), std::vector<std::uint8_t>(p1.size())};
    for (std::size_t i = 0; i < p1.size(); ++i) {
        out.probs.data[i] = 0.5 * (p1.data[i] + p2.data[i]);
        out.labels[i] = out.probs.data[i] > kDecisionThreshold ? 1 : 0;
    }
    return out;
}

Prediction predict(const ModelParams& params, const Array& batch) {
    const Array e = encode(params, batch);
    return combine_heads(classify(params, e, Head::First), classify(params, e, Head::Second));
}

// Checkpoint layout: a magic line, the config as key=value lines, then one
// "array <name> <rows> <cols>" header per tensor followed by its values.

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    const ModelConfig& c = params.config;
    out << "pm2-checkpoint v1\n"
        << "feature_dim=" << c.feature_dim << "\n"
        << "hidden_dims=" << join_dims(c.hidden_dims) << "\n"
        << "embed_dim=" << c.embed_dim << "\n"
        << "n_aus=" << c.n_aus << "\n"
        << "classifier_hidden=" << join_dims(c.classifier_hidden) << "\n";
    auto write_mlp = [&](const Mlp& mlp, const std::string& name) {
        for (std::size_t i = 0; i < mlp.size(); ++i) {
            for (const auto& [suffix, arr] : {std::pair<const char*, const Array*>{"weight", &mlp[i].weight},
                                              std::pair<const char*, const Array*>{"bias", &mlp[i].bias}}) {
                out << "array " << name << "." << i << "." << suffix << " " << arr->rows() << " " << arr->cols()
                    << "\n";
                for (std::size_t k = 0; k < arr->size(); ++k) {
                    if (k) out << ' ';
                    out << text::format_exact(arr->data[k]);
                }
                out << "\n";
            }
        }
    };
    write_mlp(params.encoder, "encoder");
    write_mlp(params.classifier1, "classifier1");
    write_mlp(params.classifier2, "classifier2");
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    std::size_t line_no = 0;
    std::string line;
    auto next_line = [&]() -> std::string& {
        if (!std::getline(in, line)) {
            throw std::runtime_error("load_checkpoint: unexpected end of file after line " + std::to_string(line_no));
        }
        ++line_no;
        return line;
    };
    auto fail = [&](const std::string& why) -> std::runtime_error {
        return std::runtime_error("load_checkpoint: line " + std::to_string(line_no) + ": " + why);
    };
    if (next_line() != "pm2-checkpoint v1") throw fail("bad magic");

    auto value_of = [&](const std::string& key) {
        const std::string& l = next_line();
        if (l.rfind(key + "=", 0) != 0) throw fail("expected key " + key);
        return l.substr(key.size() + 1);
    };
    auto parse_size = [&](std::string_view s) {
        const auto v = text::parse_int(s);
        if (!v || *v < 0) throw fail("bad integer '" + std::string(s) + "'");
        return static_cast<std::size_t>(*v);
    };
    auto parse_dims = [&](const std::string& s) {
        std::vector<std::size_t> dims;
        if (s.empty()) return dims;
        for (auto part : text::split(s, ',')) dims.push_back(parse_size(part));
        return dims;
    };

    ModelConfig c;
    c.feature_dim = parse_size(value_of("feature_dim"));
    c.hidden_dims = parse_dims(value_of("hidden_dims"));
    c.embed_dim = parse_size(value_of("embed_dim"));
    c.n_aus = parse_size(value_of("n_aus"));
    c.classifier_hidden = parse_dims(value_of("classifier_hidden"));
    c.validate();

    // Shapes are fixed by the config; the headers are checked against them.
    ModelParams p = init_params(c, 0);
    auto read_mlp = [&](Mlp& mlp, const std::string& name) {
        for (std::size_t i = 0; i < mlp.size(); ++i) {
            for (const auto& [suffix, arr] : {std::pair<const char*, Array*>{"weight", &mlp[i].weight},
                                              std::pair<const char*, Array*>{"bias", &mlp[i].bias}}) {
                std::istringstream header(next_line());
                std::string tag, got_name;
                std::size_t rows = 0, cols = 0;
                header >> tag >> got_name >> rows >> cols;
                const std::string want = name + "." + std::to_string(i) + "." + suffix;
                if (tag != "array" || got_name != want) throw fail("expected array " + want);
                if (rows != arr->rows() || cols != arr->cols()) throw fail("shape mismatch for " + want);
                const auto fields = text::split(next_line(), ' ');
                if (fields.size() != arr->size()) throw fail("expected " + std::to_string(arr->size()) + " values");
                for (std::size_t k = 0; k < fields.size(); ++k) {
                    const auto v = text::parse_double(fields[k]);
                    if (!v) throw fail("bad number in " + want);
                    arr->data[k] = *v;
                }
            }
        }
    };
    read_mlp(p.encoder, "encoder");
    read_mlp(p.classifier1, "classifier1");
    read_mlp(p.classifier2, "classifier2");
    return p;
}

}  // namespace pm2
