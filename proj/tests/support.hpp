#pragma once

// Fixtures shared by the unit and acceptance tests.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "ssi/corpus.hpp"
#include "ssi/nlp.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "ssi") {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(stamp) + "-" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct Tok {
    const char* surface;
    const char* tag;
    const char* lemma;
};

inline ssi::nlp::TaggedSentence sentence(std::initializer_list<Tok> toks) {
    ssi::nlp::TaggedSentence s;
    for (const auto& t : toks) s.push_back({t.surface, t.tag, t.lemma});
    return s;
}

inline ssi::corpus::Procedure procedure(std::string id, std::string patient, const char* date,
                                        std::optional<bool> label) {
    return {std::move(id), std::move(patient), ssi::Date::parse(date), "rachis", label};
}

inline ssi::corpus::ClinicalDocument document(std::string id, std::string patient, const char* date,
                                              std::string text,
                                              ssi::corpus::DocType type = ssi::corpus::DocType::consultation) {
    return {std::move(id), std::move(patient), ssi::Date::parse(date), type, std::move(text)};
}

inline ssi::corpus::CareEvent event(std::string patient, const char* date, ssi::corpus::EventKind kind,
                                    std::string code) {
    return {std::move(patient), ssi::Date::parse(date), kind, std::move(code)};
}

}  // namespace testing
