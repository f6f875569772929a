#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace ssi {

/// Calendar date at day granularity, stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;

    static Date from_ymd(int year, unsigned month, unsigned day);
    static Date from_days(long days) {
        Date d;
        d.days_ = days;
        return d;
    }
    /// Parses strict "YYYY-MM-DD". Throws ssi::ValidationError on bad input.
    static Date parse(std::string_view text);

    long days() const { return days_; }
    int year() const;
    unsigned month() const;
    unsigned day() const;
    std::string to_string() const;

    Date operator+(long n) const { return from_days(days_ + n); }
    Date operator-(long n) const { return from_days(days_ - n); }
    long operator-(Date other) const { return days_ - other.days_; }

    auto operator<=>(const Date&) const = default;

private:
    long days_ = 0;
};

}  // namespace ssi
