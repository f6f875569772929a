#include <doctest.h>

#include "ssi/config.hpp"
#include "ssi/error.hpp"
#include "support.hpp"

using namespace ssi::config;

namespace {

std::string message_of(auto&& fn) {
    try {
        fn();
    } catch (const ssi::Error& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("sections prefix keys and values are typed") {
    const auto c = FlatConfig::parse(R"(# top comment
seed = 42

[select]
positive_ratio = 0.2   # trailing comment
top_k = 20
reference = "ref # not a comment.txt"

[window]
include_day0 = false

[split]
train_years = [2015, 2016]
labels = ["a", "b\"c"]
)");
    CHECK(c.get_int("seed") == 42);
    CHECK(c.get_double("select.positive_ratio") == 0.2);
    CHECK(c.get_double("select.top_k") == 20.0);
    CHECK(c.get_string("select.reference") == "ref # not a comment.txt");
    CHECK(c.get_bool("window.include_day0") == false);
    CHECK(c.get_int_list("split.train_years") == std::vector<std::int64_t>{2015, 2016});
    CHECK(c.get_string_list("split.labels") == std::vector<std::string>{"a", "b\"c"});
    CHECK_FALSE(c.get_int("nope").has_value());
    CHECK(c.keys().size() == 7);
}

TEST_CASE("type mismatches name the field") {
    const auto c = FlatConfig::parse("seed = \"x\"\nflag = 1\n");
    CHECK(message_of([&] { (void)c.get_int("seed"); }).find("'seed'") != std::string::npos);
    CHECK_THROWS_AS((void)c.get_bool("flag"), ssi::ValidationError);
    CHECK(c.get_int_list("flag") == std::vector<std::int64_t>{1});
}

TEST_CASE("syntax errors carry the line number") {
    auto line_of = [](std::string_view text) -> std::size_t {
        try {
            FlatConfig::parse(text);
        } catch (const ssi::ParseError& e) {
            return e.line();
        }
        return 0;
    };
    CHECK(line_of("a = 1\nb\n") == 2);
    CHECK(line_of("a = 1\n\n[sec\n") == 3);
    CHECK(line_of("a = \"open\n") == 1);
    CHECK(line_of("a = [1, 2\n") == 1);
    CHECK(line_of("a = 1\na = 2\n") == 2);
    CHECK(line_of("a = @\n") == 1);
    CHECK(line_of("a = 1\n# ok\nb = 2\n") == 0);
}

TEST_CASE("overrides use the document syntax with a bare-string fallback") {
    auto c = FlatConfig::parse("[output]\ndir = \"out\"\n");
    c.apply_override("output.dir=elsewhere");
    CHECK(c.get_string("output.dir") == "elsewhere");
    c.apply_override("seed=7");
    CHECK(c.get_int("seed") == 7);
    c.apply_override("split.test_years=[2018]");
    CHECK(c.get_int_list("split.test_years") == std::vector<std::int64_t>{2018});
    CHECK_THROWS_AS(c.apply_override("noequals"), ssi::ValidationError);
    CHECK_THROWS_AS(c.apply_override("bad key=1"), ssi::ValidationError);
}

TEST_CASE("run config rejects unknown fields and bad values") {
    CHECK(message_of([] { RunConfig::from_flat(FlatConfig::parse("[model]\nkindd = \"x\"\n"), "."); })
              .find("unknown config field 'model.kindd'") != std::string::npos);
    CHECK_THROWS_AS(RunConfig::from_flat(FlatConfig::parse("[model]\nkind = \"svm\"\n"), "."), ssi::ValidationError);
    CHECK_THROWS_AS(RunConfig::from_flat(FlatConfig::parse("[nlp]\nmax_content = 0\n"), "."), ssi::ValidationError);
    CHECK_THROWS_AS(RunConfig::from_flat(FlatConfig::parse("[serve]\nport = 70000\n"), "."), ssi::ValidationError);
    CHECK_THROWS_AS(RunConfig::from_flat(FlatConfig::parse("[select]\npositive_ratio = 2.0\n"), "."),
                    ssi::ValidationError);
    CHECK_THROWS_AS(RunConfig::from_flat(FlatConfig::parse("[features]\nalgo = \"algo9\"\n"), "."), ssi::ValidationError);
}

TEST_CASE("missing required fields are reported by name") {
    const auto c = RunConfig::from_flat(FlatConfig::parse(""), ".");
    CHECK(message_of([&] { RunConfig::require(c.procedures, "corpus.procedures"); }) ==
          "missing required config field 'corpus.procedures'");
    CHECK(message_of([&] { c.require_seed(); }) == "missing required config field 'seed'");
}

TEST_CASE("defaults and path resolution against the config directory") {
    testing::TempDir dir;
    ssi::corpus::write_file(dir / "cfg" / "run.toml", R"(seed = 3
[corpus]
procedures = "data/p.jsonl"
documents = "/abs/d.jsonl"
[model]
kind = "random_forest"
n_trees = 5
[window]
days = 30
)");
    const auto c = RunConfig::load(dir / "cfg" / "run.toml", {"split.test_years=[2018]", "output.dir=o"});
    CHECK(c.procedures == dir / "cfg" / "data" / "p.jsonl");
    CHECK(c.documents == std::filesystem::path("/abs/d.jsonl"));
    CHECK(c.output_dir == dir / "cfg" / "o");
    CHECK(c.store() == dir / "cfg" / "o" / "store.log.jsonl");
    CHECK(c.seed == 3u);
    CHECK(c.model_kind == "random_forest");
    CHECK(c.forest.n_trees == 5);
    CHECK(c.window.length_days == 30);
    CHECK(c.window.include_day0);
    CHECK(c.train_years == std::set<int>{2015, 2016});
    CHECK(c.test_years == std::set<int>{2018});
    CHECK(c.selection.positive_ratio == 0.2);
    CHECK(c.selection.top_k == 20);
    CHECK(c.algo == ssi::features::Algorithm::algo2);
    CHECK_THROWS_AS(RunConfig::load(dir / "missing.toml"), ssi::NotFoundError);
}

TEST_CASE("the shipped synthetic config is valid") {
    const auto path = std::filesystem::path(SSI_SOURCE_DIR) / "configs" / "synthetic.toml";
    const auto c = RunConfig::load(path);
    CHECK(c.seed.has_value());
    for (const auto& k : FlatConfig::load(path).keys()) CHECK(known_keys().contains(k));
}
