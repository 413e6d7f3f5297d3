#include "pm2/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pm2/text.hpp"

namespace pm2 {

namespace {

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += text::format_exact(v[i]);
    }
    return s;
}

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

class Parser {
public:
    Parser(std::string origin, std::size_t line, std::string key)
        : origin_(std::move(origin)), line_(line), key_(std::move(key)) {}

    [[noreturn]] void fail(const std::string& why) const {
        throw std::invalid_argument(origin_ + ":" + std::to_string(line_) + ": " + key_ + ": " + why);
    }

    double real(std::string_view v) const {
        const auto d = text::parse_double(v);
        if (!d) fail("expected a number, got '" + std::string(v) + "'");
        return *d;
    }
    std::int64_t integer(std::string_view v) const {
        const auto i = text::parse_int(v);
        if (!i) fail("expected an integer, got '" + std::string(v) + "'");
        return *i;
    }
    std::size_t count(std::string_view v) const {
        const auto i = integer(v);
        if (i < 0) fail("must be >= 0");
        return static_cast<std::size_t>(i);
    }
    std::vector<double> reals(std::string_view v) const {
        std::vector<double> out;
        if (text::trim(v).empty()) return out;
        for (auto part : text::split(v, ',')) out.push_back(real(part));
        return out;
    }
    std::vector<std::size_t> counts(std::string_view v) const {
        std::vector<std::size_t> out;
        if (text::trim(v).empty()) return out;
        for (auto part : text::split(v, ',')) out.push_back(count(part));
        return out;
    }

private:
    std::string origin_;
    std::size_t line_;
    std::string key_;
};

}  // namespace

ModelConfig ExperimentSpec::model_config() const {
    ModelConfig m = model;
    m.feature_dim = gen.feature_dim;
    m.n_aus = gen.n_aus;
    return m;
}

void ExperimentSpec::validate() const {
    gen.validate();
    model_config().validate();
    train.validate();
    if (repeats < 1) throw std::invalid_argument("ExperimentSpec.repeats must be >= 1");
    if (modes.empty() && alphas.empty()) throw std::invalid_argument("ExperimentSpec.modes is empty");
    if (alphas.empty() != betas.empty()) {
        throw std::invalid_argument("ExperimentSpec: alphas and betas must be given together");
    }
    for (double a : alphas) {
        if (!(a >= 0.0)) throw std::invalid_argument("ExperimentSpec.alphas must be >= 0");
    }
    for (double b : betas) {
        if (!(b >= 0.0)) throw std::invalid_argument("ExperimentSpec.betas must be >= 0");
    }
    if (source_data.has_value() != target_data.has_value()) {
        throw std::invalid_argument("ExperimentSpec: source_data and target_data must be given together");
    }
}

ExperimentSpec parse_spec(std::string_view input, const std::string& origin) {
    ExperimentSpec s;
    std::size_t line_no = 0;
    for (std::string_view raw : text::split(input, '\n')) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        const std::string_view line = text::trim(raw.substr(0, hash));
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key(text::trim(line.substr(0, eq)));
        const std::string_view v = text::trim(line.substr(eq + 1));
        const Parser p(origin, line_no, key);

        GenConfig& g = s.gen;
        TrainConfig& t = s.train;
        if (key == "n_aus") g.n_aus = p.count(v);
        else if (key == "feature_dim") g.feature_dim = p.count(v);
        else if (key == "n_source") g.n_source = p.count(v);
        else if (key == "n_target") g.n_target = p.count(v);
        else if (key == "base_rates") g.base_rates = p.reals(v);
        else if (key == "source_group_imbalance") g.source_group_imbalance = p.real(v);
        else if (key == "target_group_fraction") g.target_group_fraction = p.real(v);
        else if (key == "domain_shift_scale") g.domain_shift_scale = p.real(v);
        else if (key == "group_shift_scale") g.group_shift_scale = p.real(v);
        else if (key == "noise_std") g.noise_std = p.real(v);
        else if (key == "gen_seed") g.seed = static_cast<std::uint64_t>(p.count(v));
        else if (key == "hidden_dims") s.model.hidden_dims = p.counts(v);
        else if (key == "embed_dim") s.model.embed_dim = p.count(v);
        else if (key == "classifier_hidden") s.model.classifier_hidden = p.counts(v);
        else if (key == "epochs") t.epochs = static_cast<int>(p.integer(v));
        else if (key == "batch_size") t.batch_size = p.count(v);
        else if (key == "learning_rate") t.learning_rate = p.real(v);
        else if (key == "weight_decay") t.weight_decay = p.real(v);
        else if (key == "alpha") t.weights.alpha = p.real(v);
        else if (key == "beta") t.weights.beta = p.real(v);
        else if (key == "moment_order") t.weights.moment_order = static_cast<int>(p.integer(v));
        else if (key == "seed") t.seed = static_cast<std::uint64_t>(p.count(v));
        else if (key == "step3_repeats") t.step3_repeats = static_cast<int>(p.integer(v));
        else if (key == "repeats") s.repeats = static_cast<int>(p.integer(v));
        else if (key == "output_dir") s.output_dir = std::string(v);
        else if (key == "alphas") s.alphas = p.reals(v);
        else if (key == "betas") s.betas = p.reals(v);
        else if (key == "source_data") s.source_data = std::string(v);
        else if (key == "target_data") s.target_data = std::string(v);
        else if (key == "mode" || key == "modes") {
            s.modes.clear();
            if (!v.empty()) {
                for (auto m : text::split(v, ',')) {
                    try {
                        s.modes.push_back(mode_from_name(text::trim(m)));
                    } catch (const std::invalid_argument& e) {
                        p.fail(e.what());
                    }
                }
            }
        } else {
            p.fail("unknown key");
        }
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(origin + ": " + e.what());
    }
    return s;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_spec(buf.str(), path.string());
}

std::string render_spec(const ExperimentSpec& s) {
    std::ostringstream o;
    const GenConfig& g = s.gen;
    const TrainConfig& t = s.train;
    o << "n_aus=" << g.n_aus << "\n"
      << "feature_dim=" << g.feature_dim << "\n"
      << "n_source=" << g.n_source << "\n"
      << "n_target=" << g.n_target << "\n"
      << "base_rates=" << join(g.base_rates) << "\n"
      << "source_group_imbalance=" << text::format_exact(g.source_group_imbalance) << "\n"
      << "target_group_fraction=" << text::format_exact(g.target_group_fraction) << "\n"
      << "domain_shift_scale=" << text::format_exact(g.domain_shift_scale) << "\n"
      << "group_shift_scale=" << text::format_exact(g.group_shift_scale) << "\n"
      << "noise_std=" << text::format_exact(g.noise_std) << "\n"
      << "gen_seed=" << g.seed << "\n"
      << "hidden_dims=" << join(s.model.hidden_dims) << "\n"
      << "embed_dim=" << s.model.embed_dim << "\n"
      << "classifier_hidden=" << join(s.model.classifier_hidden) << "\n"
      << "epochs=" << t.epochs << "\n"
      << "batch_size=" << t.batch_size << "\n"
      << "learning_rate=" << text::format_exact(t.learning_rate) << "\n"
      << "weight_decay=" << text::format_exact(t.weight_decay) << "\n"
      << "alpha=" << text::format_exact(t.weights.alpha) << "\n"
      << "beta=" << text::format_exact(t.weights.beta) << "\n"
      << "moment_order=" << t.weights.moment_order << "\n"
      << "seed=" << t.seed << "\n"
      << "step3_repeats=" << t.step3_repeats << "\n"
      << "repeats=" << s.repeats << "\n"
      << "output_dir=" << s.output_dir.string() << "\n";
    o << "modes=";
    for (std::size_t i = 0; i < s.modes.size(); ++i) o << (i ? "," : "") << mode_name(s.modes[i]);
    o << "\n";
    if (!s.alphas.empty()) o << "alphas=" << join(s.alphas) << "\nbetas=" << join(s.betas) << "\n";
    if (s.source_data) o << "source_data=" << s.source_data->string() << "\n";
    if (s.target_data) o << "target_data=" << s.target_data->string() << "\n";
    return o.str();
}

}  // namespace pm2
