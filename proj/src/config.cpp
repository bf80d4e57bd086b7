#include "din/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "din/error.hpp"

namespace din {

std::string_view to_string(FusionMode mode) {
    switch (mode) {
        case FusionMode::Asyca: return "asyca";
        case FusionMode::Concat: return "concat";
        case FusionMode::Sum: return "sum";
        case FusionMode::Mean: return "mean";
    }
    return "?";
}

FusionMode parse_fusion_mode(std::string_view text) {
    if (text == "asyca") return FusionMode::Asyca;
    if (text == "concat") return FusionMode::Concat;
    if (text == "sum") return FusionMode::Sum;
    if (text == "mean") return FusionMode::Mean;
    throw ConfigError("unknown fusion mode '" + std::string(text) +
                      "' (expected asyca, concat, sum or mean)");
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (const char ch : bytes) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

// Value parsers throw a bare message; callers prefix location.
int parse_int(std::string_view v) {
    int out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError("expected an integer, got '" + std::string(v) + "'");
    }
    return out;
}

std::uint64_t parse_u64(std::string_view v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
    }
    return out;
}

double parse_double(std::string_view v) {
    const std::string s(v);
    std::size_t used = 0;
    double out = 0;
    try {
        out = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw ConfigError("expected a number, got '" + s + "'");
    return out;
}

bool parse_bool(std::string_view v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <typename Config>
struct Field {
    const char* key;
    std::function<void(Config&, std::string_view)> set;
    std::function<std::string(const Config&)> get;
};

#define DIN_INT_FIELD(C, name)                                                          \
    Field<C> {                                                                          \
        #name, [](C& c, std::string_view v) { c.name = parse_int(v); },                 \
            [](const C& c) { return std::to_string(c.name); }                           \
    }
#define DIN_BOOL_FIELD(C, name)                                                         \
    Field<C> {                                                                          \
        #name, [](C& c, std::string_view v) { c.name = parse_bool(v); },                \
            [](const C& c) { return std::string(c.name ? "true" : "false"); }           \
    }
#define DIN_DOUBLE_FIELD(C, name)                                                       \
    Field<C> {                                                                          \
        #name, [](C& c, std::string_view v) { c.name = parse_double(v); },              \
            [](const C& c) { return format_double(c.name); }                            \
    }

const std::vector<Field<ModelConfig>>& model_fields() {
    static const std::vector<Field<ModelConfig>> fields = {
        DIN_INT_FIELD(ModelConfig, branches),
        DIN_INT_FIELD(ModelConfig, wrdbs_per_branch),
        DIN_INT_FIELD(ModelConfig, rdbs_per_wrdb),
        DIN_INT_FIELD(ModelConfig, convs_per_rdb),
        DIN_INT_FIELD(ModelConfig, growth),
        DIN_INT_FIELD(ModelConfig, base_channels),
        DIN_INT_FIELD(ModelConfig, scale),
        DIN_INT_FIELD(ModelConfig, attn_reduction),
        DIN_BOOL_FIELD(ModelConfig, use_asyca),
        DIN_BOOL_FIELD(ModelConfig, use_dwc),
        DIN_BOOL_FIELD(ModelConfig, use_gff),
        Field<ModelConfig>{"fusion_mode",
                           [](ModelConfig& c, std::string_view v) { c.fusion_mode = parse_fusion_mode(v); },
                           [](const ModelConfig& c) { return std::string(to_string(c.fusion_mode)); }},
        DIN_BOOL_FIELD(ModelConfig, asyca_zero_init),
    };
    return fields;
}

const std::vector<Field<TrainConfig>>& train_fields() {
    static const std::vector<Field<TrainConfig>> fields = {
        DIN_INT_FIELD(TrainConfig, batch_size),
        DIN_INT_FIELD(TrainConfig, lr_patch),
        DIN_DOUBLE_FIELD(TrainConfig, lr0),
        DIN_INT_FIELD(TrainConfig, lr_halve_every),
        DIN_DOUBLE_FIELD(TrainConfig, beta1),
        DIN_DOUBLE_FIELD(TrainConfig, beta2),
        DIN_DOUBLE_FIELD(TrainConfig, eps),
        DIN_INT_FIELD(TrainConfig, max_epochs),
        DIN_INT_FIELD(TrainConfig, steps_per_epoch),
        Field<TrainConfig>{"seed", [](TrainConfig& c, std::string_view v) { c.seed = parse_u64(v); },
                           [](const TrainConfig& c) { return std::to_string(c.seed); }},
        DIN_BOOL_FIELD(TrainConfig, augment),
        DIN_INT_FIELD(TrainConfig, checkpoint_every),
        DIN_INT_FIELD(TrainConfig, validate_every),
        Field<TrainConfig>{"precision",
                           [](TrainConfig& c, std::string_view v) {
                               if (v != "float" && v != "double") {
                                   throw ConfigError("expected float or double, got '" +
                                                     std::string(v) + "'");
                               }
                               c.precision = std::string(v);
                           },
                           [](const TrainConfig& c) { return c.precision; }},
    };
    return fields;
}

template <typename Config>
void apply_field(Config& config, const std::vector<Field<Config>>& fields, std::string_view key,
                 std::string_view value, const std::string& where) {
    for (const auto& f : fields) {
        if (key == f.key) {
            try {
                f.set(config, value);
            } catch (const ConfigError& e) {
                throw ConfigError(where + "field '" + std::string(key) + "': " + e.what());
            }
            return;
        }
    }
    throw ConfigError(where + "unknown field '" + std::string(key) + "'");
}

template <typename Config>
Config parse_config(std::string_view text, std::string_view source, Config base,
                    const std::vector<Field<Config>>& fields) {
    for (const auto& kv : parse_key_values(text, source)) {
        const std::string where = std::string(source) + ":" + std::to_string(kv.line) + ": ";
        apply_field(base, fields, kv.key, kv.value, where);
    }
    try {
        base.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(source) + ": " + e.what());
    }
    return base;
}

template <typename Config>
std::string render(const Config& config, const std::vector<Field<Config>>& fields) {
    std::string out;
    for (const auto& f : fields) out += std::string(f.key) + " = " + f.get(config) + "\n";
    return out;
}

template <typename Config>
void override_field(Config& config, const std::vector<Field<Config>>& fields,
                    std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
    }
    apply_field(config, fields, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)),
                "override: ");
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void require(bool ok, const char* field, const std::string& msg) {
    if (!ok) throw ConfigError(std::string("field '") + field + "': " + msg);
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view source) {
    std::vector<KeyValue> out;
    std::set<std::string, std::less<>> seen;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(where + "expected 'key = value', got '" + std::string(line) + "'");
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError(where + "missing key");
        if (value.empty()) throw ConfigError(where + "field '" + key + "': missing value");
        if (!seen.insert(key).second) throw ConfigError(where + "field '" + key + "' set twice");
        out.push_back({key, value, line_no});
    }
    return out;
}

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.branches = 2;
    c.wrdbs_per_branch = 2;
    c.rdbs_per_wrdb = 1;
    c.convs_per_rdb = 2;
    c.growth = 8;
    c.base_channels = 16;
    c.scale = 2;
    c.attn_reduction = 4;
    return c;
}

ModelConfig ModelConfig::profile(std::string_view name) {
    if (name == "paper") return paper();
    if (name == "desk") return desk();
    throw ConfigError("unknown profile '" + std::string(name) + "' (expected paper or desk)");
}

void ModelConfig::validate() const {
    require(branches >= 1, "branches", "must be >= 1");
    require(wrdbs_per_branch >= 1, "wrdbs_per_branch", "must be >= 1");
    require(rdbs_per_wrdb >= 1, "rdbs_per_wrdb", "must be >= 1");
    require(convs_per_rdb >= 1, "convs_per_rdb", "must be >= 1");
    require(growth >= 1, "growth", "must be >= 1");
    require(base_channels >= 1, "base_channels", "must be >= 1");
    require(scale >= 2 && scale <= 4, "scale", "must be 2, 3 or 4");
    require(attn_reduction >= 1, "attn_reduction", "must be >= 1");
    require(base_channels % attn_reduction == 0, "attn_reduction",
            "must divide base_channels (" + std::to_string(base_channels) + ")");
    require(use_asyca == (fusion_mode == FusionMode::Asyca), "use_asyca",
            "must be true exactly when fusion_mode = asyca");
}

std::string ModelConfig::to_text() const { return render(*this, model_fields()); }

std::uint64_t ModelConfig::hash() const {
    std::string canon;
    for (const auto& f : model_fields()) {
        if (std::string_view(f.key) == "asyca_zero_init") continue;
        canon += std::string(f.key) + "=" + f.get(*this) + ";";
    }
    return fnv1a64(canon);
}

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.batch_size = 2;
    c.lr_patch = 16;
    c.lr0 = 2e-3;
    c.lr_halve_every = 2;
    c.max_epochs = 5;
    c.steps_per_epoch = 100;
    return c;
}

TrainConfig TrainConfig::profile(std::string_view name) {
    if (name == "paper") return paper();
    if (name == "desk") return desk();
    throw ConfigError("unknown profile '" + std::string(name) + "' (expected paper or desk)");
}

void TrainConfig::validate() const {
    require(batch_size >= 1, "batch_size", "must be >= 1");
    require(lr_patch >= 1, "lr_patch", "must be >= 1");
    require(lr0 > 0, "lr0", "must be positive");
    require(lr_halve_every >= 1, "lr_halve_every", "must be >= 1");
    require(beta1 >= 0 && beta1 < 1, "beta1", "must lie in [0, 1)");
    require(beta2 >= 0 && beta2 < 1, "beta2", "must lie in [0, 1)");
    require(eps > 0, "eps", "must be positive");
    require(max_epochs >= 1, "max_epochs", "must be >= 1");
    require(steps_per_epoch >= 1, "steps_per_epoch", "must be >= 1");
    require(checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
    require(validate_every >= 0, "validate_every", "must be >= 0");
}

std::string TrainConfig::to_text() const { return render(*this, train_fields()); }

ModelConfig parse_model_config(std::string_view text, std::string_view source, ModelConfig base) {
    return parse_config(text, source, base, model_fields());
}

TrainConfig parse_train_config(std::string_view text, std::string_view source, TrainConfig base) {
    return parse_config(text, source, base, train_fields());
}

ModelConfig load_model_config(const std::filesystem::path& path, ModelConfig base) {
    return parse_model_config(read_text(path), path.string(), base);
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
    return parse_train_config(read_text(path), path.string(), base);
}

void apply_override(ModelConfig& config, std::string_view assignment) {
    override_field(config, model_fields(), assignment);
}

void apply_override(TrainConfig& config, std::string_view assignment) {
    override_field(config, train_fields(), assignment);
}

}  // namespace din
