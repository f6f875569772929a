#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ssi/corpus.hpp"
#include "ssi/features.hpp"
#include "ssi/models.hpp"
#include "ssi/termselect.hpp"

namespace ssi::config {

/// A scalar or a one-level array in a flat key/value document.
struct Value {
    enum class Kind { string, integer, real, boolean, array };
    Kind kind = Kind::string;
    std::string text;  ///< string contents, or the literal for numbers/booleans
    std::vector<Value> items;
    std::size_t line = 0;
};

/// Parses a small TOML subset: `key = value` lines, optional `[section]`
/// headers that prefix keys as "section.key", '#' comments, double-quoted
/// strings with \" \\ \n \t escapes, integers, reals, true/false and arrays
/// of scalars on one line.
class FlatConfig {
public:
    static FlatConfig parse(std::string_view content, const std::string& source = "config");
    static FlatConfig load(const std::filesystem::path& path);

    /// "key=value"; the value uses the document syntax, falling back to a
    /// bare string when it does not parse (so `output.dir=out` works).
    void apply_override(std::string_view assignment);
    void set(const std::string& key, Value v) { values_[key] = std::move(v); }

    bool contains(std::string_view key) const { return values_.find(key) != values_.end(); }
    const Value* find(std::string_view key) const;
    std::vector<std::string> keys() const;

    std::optional<std::string> get_string(std::string_view key) const;
    std::optional<std::int64_t> get_int(std::string_view key) const;
    std::optional<double> get_double(std::string_view key) const;
    std::optional<bool> get_bool(std::string_view key) const;
    std::optional<std::vector<std::int64_t>> get_int_list(std::string_view key) const;
    std::optional<std::vector<std::string>> get_string_list(std::string_view key) const;

    const std::string& source() const { return source_; }

private:
    std::string source_;
    std::map<std::string, Value, std::less<>> values_;
};

/// Every key the run configuration understands.
const std::set<std::string, std::less<>>& known_keys();

/// Typed view of a run configuration. Relative paths resolve against
/// `base_dir` (the directory of the config file).
struct RunConfig {
    std::filesystem::path base_dir = ".";

    std::optional<std::filesystem::path> procedures;
    std::optional<std::filesystem::path> documents;
    std::optional<std::filesystem::path> events;

    std::optional<std::filesystem::path> lexicon;
    std::optional<std::filesystem::path> tagmap;
    std::optional<std::filesystem::path> tagged_dir;
    int max_content = 3;

    std::optional<std::filesystem::path> reference;
    std::optional<std::filesystem::path> approval_list;
    termselect::SelectionConfig selection;

    features::Algorithm algo = features::Algorithm::algo2;
    std::optional<std::filesystem::path> expert_terms;
    std::optional<std::filesystem::path> structured_config;
    corpus::WindowPolicy window;

    std::string model_kind = "logistic_regression";
    models::LogRegParams logreg;
    models::ForestParams forest;

    std::set<int> train_years{2015, 2016};
    std::set<int> test_years{2017};
    std::optional<std::uint64_t> seed;

    std::filesystem::path output_dir = "out";

    std::filesystem::path synth_dir = "synth";
    std::optional<std::filesystem::path> synth_config;

    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> store_path;
    std::optional<std::filesystem::path> static_dir;

    /// Rejects unknown keys and ill-typed values.
    static RunConfig from_flat(const FlatConfig& flat, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

    /// The value of an optional path field, or a ValidationError naming it.
    static const std::filesystem::path& require(const std::optional<std::filesystem::path>& field,
                                                std::string_view key);
    std::uint64_t require_seed() const;

    std::filesystem::path out(std::string_view file) const { return output_dir / file; }
    std::filesystem::path store() const { return store_path ? *store_path : out("store.log.jsonl"); }
};

}  // namespace ssi::config
