#include "ssi/config.hpp"

#include <charconv>
#include <limits>

#include "ssi/error.hpp"
#include "ssi/text.hpp"

namespace ssi::config {

namespace {

class ValueParser {
public:
    ValueParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

    Value parse_all() {
        Value v = parse_value(true);
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing characters");
        return v;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw ValidationError(what); }

    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }

    Value parse_value(bool allow_array) {
        skip_ws();
        if (pos_ >= s_.size()) fail("missing value");
        Value v;
        v.line = line_;
        const char c = s_[pos_];
        if (c == '"') {
            v.kind = Value::Kind::string;
            v.text = parse_string();
            return v;
        }
        if (c == '[') {
            if (!allow_array) fail("nested arrays are not supported");
            ++pos_;
            v.kind = Value::Kind::array;
            skip_ws();
            if (pos_ < s_.size() && s_[pos_] == ']') {
                ++pos_;
                return v;
            }
            while (true) {
                v.items.push_back(parse_value(false));
                skip_ws();
                if (pos_ >= s_.size()) fail("unterminated array");
                if (s_[pos_] == ',') {
                    ++pos_;
                    skip_ws();
                    if (pos_ < s_.size() && s_[pos_] == ']') {
                        ++pos_;
                        return v;
                    }
                    continue;
                }
                if (s_[pos_] == ']') {
                    ++pos_;
                    return v;
                }
                fail("expected ',' or ']' in array");
            }
        }
        std::size_t end = pos_;
        while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && s_[end] != ' ' && s_[end] != '\t') ++end;
        const std::string_view word = s_.substr(pos_, end - pos_);
        pos_ = end;
        v.text = std::string(word);
        if (word == "true" || word == "false") {
            v.kind = Value::Kind::boolean;
            return v;
        }
        std::int64_t iv = 0;
        auto [p, ec] = std::from_chars(word.data(), word.data() + word.size(), iv);
        if (ec == std::errc() && p == word.data() + word.size()) {
            v.kind = Value::Kind::integer;
            return v;
        }
        double dv = 0;
        auto [p2, ec2] = std::from_chars(word.data(), word.data() + word.size(), dv);
        if (ec2 == std::errc() && p2 == word.data() + word.size()) {
            v.kind = Value::Kind::real;
            return v;
        }
        fail("cannot parse value \"" + std::string(word) + "\" (strings must be quoted)");
    }

    std::string parse_string() {
        ++pos_;
        std::string out;
        while (pos_ < s_.size()) {
            const char c = s_[pos_++];
            if (c == '"') return out;
            if (c != '\\') {
                out += c;
                continue;
            }
            if (pos_ >= s_.size()) break;
            switch (const char e = s_[pos_++]) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                default: fail(std::string("unknown escape \\") + e);
            }
        }
        fail("unterminated string");
    }

    std::string_view s_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

// Drops a trailing comment, ignoring '#' inside quoted strings.
std::string_view strip_comment(std::string_view line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted && c == '\\') {
            ++i;
            continue;
        }
        if (c == '"') quoted = !quoted;
        if (c == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

bool valid_key(std::string_view key) {
    if (key.empty()) return false;
    for (char c : key)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
    return true;
}

}  // namespace

FlatConfig FlatConfig::parse(std::string_view content, const std::string& source) {
    FlatConfig cfg;
    cfg.source_ = source;
    std::string section;
    std::size_t pos = 0, line_no = 0;
    while (pos <= content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        const std::string_view raw = content.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        const std::string line = text::trim(strip_comment(raw));
        if (line.empty()) continue;
        try {
            if (line.front() == '[') {
                if (line.back() != ']') throw ValidationError("malformed section header");
                section = std::string(text::trim(line.substr(1, line.size() - 2)));
                if (!valid_key(section)) throw ValidationError("invalid section name \"" + section + "\"");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw ValidationError("expected key = value");
            const std::string key_part(text::trim(line.substr(0, eq)));
            if (!valid_key(key_part)) throw ValidationError("invalid key \"" + key_part + "\"");
            const std::string key = section.empty() ? key_part : section + "." + key_part;
            if (cfg.contains(key)) throw ValidationError("duplicate key \"" + key + "\"");
            const std::string rhs = text::trim(line.substr(eq + 1));
            cfg.values_[key] = ValueParser(rhs, line_no).parse_all();
        } catch (const ValidationError& e) {
            throw ParseError(source, line_no, e.what());
        }
        if (nl == content.size()) break;
    }
    return cfg;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path) {
    return parse(corpus::read_file(path), path.string());
}

void FlatConfig::apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
        throw ValidationError("override \"" + std::string(assignment) + "\" is not key=value");
    const std::string key(text::trim(assignment.substr(0, eq)));
    if (!valid_key(key)) throw ValidationError("invalid override key \"" + key + "\"");
    const std::string raw = text::trim(assignment.substr(eq + 1));
    Value v;
    try {
        v = ValueParser(raw, 0).parse_all();
    } catch (const ValidationError&) {
        v.kind = Value::Kind::string;
        v.text = raw;
    }
    values_[key] = std::move(v);
}

const Value* FlatConfig::find(std::string_view key) const {
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
}

std::vector<std::string> FlatConfig::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
}

namespace {

[[noreturn]] void type_error(std::string_view key, const Value& v, std::string_view expected) {
    std::string msg = "config field '" + std::string(key) + "' must be " + std::string(expected);
    if (v.line) msg += " (line " + std::to_string(v.line) + ")";
    throw ValidationError(msg);
}

std::int64_t as_int(std::string_view key, const Value& v) {
    if (v.kind != Value::Kind::integer) type_error(key, v, "an integer");
    return std::stoll(v.text);
}

double as_double(std::string_view key, const Value& v) {
    if (v.kind != Value::Kind::integer && v.kind != Value::Kind::real) type_error(key, v, "a number");
    double d = 0;
    std::from_chars(v.text.data(), v.text.data() + v.text.size(), d);
    return d;
}

}  // namespace

std::optional<std::string> FlatConfig::get_string(std::string_view key) const {
    const Value* v = find(key);
    if (!v) return std::nullopt;
    if (v->kind != Value::Kind::string) type_error(key, *v, "a string");
    return v->text;
}

std::optional<std::int64_t> FlatConfig::get_int(std::string_view key) const {
    const Value* v = find(key);
    if (!v) return std::nullopt;
    return as_int(key, *v);
}

std::optional<double> FlatConfig::get_double(std::string_view key) const {
    const Value* v = find(key);
    if (!v) return std::nullopt;
    return as_double(key, *v);
}

std::optional<bool> FlatConfig::get_bool(std::string_view key) const {
    const Value* v = find(key);
    if (!v) return std::nullopt;
    if (v->kind != Value::Kind::boolean) type_error(key, *v, "true or false");
    return v->text == "true";
}

std::optional<std::vector<std::int64_t>> FlatConfig::get_int_list(std::string_view key) const {
    const Value* v = find(key);
    if (!v) return std::nullopt;
    if (v->kind == Value::Kind::integer) return std::vector<std::int64_t>{as_int(key, *v)};
    if (v->kind != Value::Kind::array) type_error(key, *v, "an array of integers");
    std::vector<std::int64_t> out;
    for (const auto& item : v->items) out.push_back(as_int(key, item));
    return out;
}

std::optional<std::vector<std::string>> FlatConfig::get_string_list(std::string_view key) const {
    const Value* v = find(key);
    if (!v) return std::nullopt;
    if (v->kind == Value::Kind::string) return std::vector<std::string>{v->text};
    if (v->kind != Value::Kind::array) type_error(key, *v, "an array of strings");
    std::vector<std::string> out;
    for (const auto& item : v->items) {
        if (item.kind != Value::Kind::string) type_error(key, item, "an array of strings");
        out.push_back(item.text);
    }
    return out;
}

const std::set<std::string, std::less<>>& known_keys() {
    static const std::set<std::string, std::less<>> keys{
        "corpus.procedures",     "corpus.documents",        "corpus.events",
        "nlp.lexicon",           "nlp.tagmap",              "nlp.tagged_dir",
        "nlp.max_content",       "select.reference",        "select.approval_list",
        "select.positive_ratio", "select.smoothing",        "select.top_k",
        "features.algo",         "features.expert_terms",   "features.structured_config",
        "window.days",           "window.include_day0",     "model.kind",
        "model.l2_lambda",       "model.max_iters",         "model.tolerance",
        "model.n_trees",         "model.max_depth",         "model.features_per_split",
        "model.min_samples_split", "split.train_years",     "split.test_years",
        "seed",                  "output.dir",              "synth.dir",
        "synth.config",          "serve.host",              "serve.port",
        "serve.store_path",      "serve.static_dir",
    };
    return keys;
}

RunConfig RunConfig::from_flat(const FlatConfig& flat, const std::filesystem::path& base_dir) {
    for (const auto& k : flat.keys())
        if (!known_keys().contains(k)) throw ValidationError("unknown config field '" + k + "'");

    RunConfig c;
    c.base_dir = base_dir;
    auto path = [&](std::string_view key) -> std::optional<std::filesystem::path> {
        auto s = flat.get_string(key);
        if (!s || s->empty()) return std::nullopt;
        std::filesystem::path p(*s);
        return p.is_absolute() ? p : base_dir / p;
    };
    auto positive_int = [&](std::string_view key, auto& field) {
        if (auto v = flat.get_int(key)) {
            if (*v < 0 || *v > std::numeric_limits<int>::max())
                throw ValidationError("config field '" + std::string(key) + "' is out of range");
            field = static_cast<std::remove_reference_t<decltype(field)>>(*v);
        }
    };

    c.procedures = path("corpus.procedures");
    c.documents = path("corpus.documents");
    c.events = path("corpus.events");
    c.lexicon = path("nlp.lexicon");
    c.tagmap = path("nlp.tagmap");
    c.tagged_dir = path("nlp.tagged_dir");
    positive_int("nlp.max_content", c.max_content);
    if (c.max_content < 1) throw ValidationError("config field 'nlp.max_content' must be at least 1");

    c.reference = path("select.reference");
    c.approval_list = path("select.approval_list");
    if (auto v = flat.get_double("select.positive_ratio")) c.selection.positive_ratio = *v;
    if (auto v = flat.get_double("select.smoothing")) c.selection.smoothing = *v;
    positive_int("select.top_k", c.selection.top_k);
    c.selection.validate();

    if (auto v = flat.get_string("features.algo")) c.algo = features::parse_algorithm(*v);
    c.expert_terms = path("features.expert_terms");
    c.structured_config = path("features.structured_config");
    positive_int("window.days", c.window.length_days);
    if (auto v = flat.get_bool("window.include_day0")) c.window.include_day0 = *v;

    if (auto v = flat.get_string("model.kind")) c.model_kind = *v;
    if (c.model_kind != "logistic_regression" && c.model_kind != "random_forest")
        throw ValidationError("config field 'model.kind' must be logistic_regression or random_forest");
    if (auto v = flat.get_double("model.l2_lambda")) c.logreg.l2_lambda = *v;
    positive_int("model.max_iters", c.logreg.max_iters);
    if (auto v = flat.get_double("model.tolerance")) c.logreg.tolerance = *v;
    if (c.logreg.l2_lambda < 0) throw ValidationError("config field 'model.l2_lambda' must be non-negative");
    positive_int("model.n_trees", c.forest.n_trees);
    positive_int("model.max_depth", c.forest.max_depth);
    positive_int("model.features_per_split", c.forest.features_per_split);
    positive_int("model.min_samples_split", c.forest.min_samples_split);
    if (c.forest.n_trees < 1) throw ValidationError("config field 'model.n_trees' must be at least 1");

    auto years = [&](std::string_view key, std::set<int>& out) {
        if (auto v = flat.get_int_list(key)) {
            out.clear();
            for (auto y : *v) out.insert(static_cast<int>(y));
        }
    };
    years("split.train_years", c.train_years);
    years("split.test_years", c.test_years);

    if (auto v = flat.get_int("seed")) {
        if (*v < 0) throw ValidationError("config field 'seed' must be non-negative");
        c.seed = static_cast<std::uint64_t>(*v);
        c.forest.seed = *c.seed;
    }
    if (auto p = path("output.dir")) c.output_dir = *p;
    else c.output_dir = base_dir / "out";
    if (auto p = path("synth.dir")) c.synth_dir = *p;
    else c.synth_dir = base_dir / "synth";
    c.synth_config = path("synth.config");

    if (auto v = flat.get_string("serve.host")) c.host = *v;
    if (auto v = flat.get_int("serve.port")) {
        if (*v < 0 || *v > 65535) throw ValidationError("config field 'serve.port' is out of range");
        c.port = static_cast<int>(*v);
    }
    c.store_path = path("serve.store_path");
    c.static_dir = path("serve.static_dir");
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    FlatConfig flat = FlatConfig::load(path);
    for (const auto& o : overrides) flat.apply_override(o);
    auto base = path.parent_path();
    if (base.empty()) base = ".";
    return from_flat(flat, base);
}

const std::filesystem::path& RunConfig::require(const std::optional<std::filesystem::path>& field,
                                                std::string_view key) {
    if (!field) throw ValidationError("missing required config field '" + std::string(key) + "'");
    return *field;
}

std::uint64_t RunConfig::require_seed() const {
    if (!seed) throw ValidationError("missing required config field 'seed'");
    return *seed;
}

}  // namespace ssi::config
