#pragma once

// Shared vocabulary types: station ids, calendar timestamps, daily periods and
// the dense flow matrix used by every analysis stage.

#include <algorithm>
#include <array>
#include <cassert>
#include <charconv>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace metapop {

/// Every failure the library reports is a metapop::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using StationId = std::int32_t;
using DistrictId = std::int64_t;

inline constexpr int kDaysPerWeek = 7;
inline constexpr int kPeriodsPerDay = 4;
inline constexpr int kPeriodsPerWeek = kDaysPerWeek * kPeriodsPerDay;
inline constexpr int kHoursPerWeek = 168;

// ---------------------------------------------------------------------------
// Periods

enum class Period : std::uint8_t { morning = 0, noon = 1, afternoon = 2, evening = 3 };

inline constexpr std::array<std::string_view, 4> kPeriodNames = {"morning", "noon", "afternoon",
                                                                 "evening"};
inline constexpr std::array<std::string_view, 7> kDayNames = {"mon", "tue", "wed", "thu",
                                                              "fri", "sat", "sun"};

// Clock hours covered by each period, [first, last). Morning starts at 05:30,
// so its first hour bin only ever holds the 05:30-05:59 half hour.
struct HourSpan {
  int first;
  int last;
};
inline constexpr std::array<HourSpan, 4> kPeriodHours = {{{5, 10}, {10, 16}, {16, 21}, {21, 24}}};
inline constexpr int kServiceStartMinute = 5 * 60 + 30;

inline std::string_view period_name(Period p) { return kPeriodNames[static_cast<int>(p)]; }

inline std::optional<Period> parse_period(std::string_view s) {
  for (std::size_t k = 0; k < kPeriodNames.size(); ++k)
    if (kPeriodNames[k] == s) return static_cast<Period>(k);
  return std::nullopt;
}

/// Period owning a clock hour, or nullopt for the overnight gap [00:00, 05:00).
/// Hour 5 maps to morning; callers that care about 05:00-05:29 check minutes.
inline std::optional<Period> period_of_hour(int hour) {
  for (std::size_t k = 0; k < kPeriodHours.size(); ++k)
    if (hour >= kPeriodHours[k].first && hour < kPeriodHours[k].last) return static_cast<Period>(k);
  return std::nullopt;
}

/// One of the 28 (weekday, period) slots of a week. Monday is day 0.
struct PeriodIndex {
  int day = 0;
  Period period = Period::morning;

  constexpr int index() const { return day * kPeriodsPerDay + static_cast<int>(period); }
  static constexpr PeriodIndex from_index(int idx) {
    return {idx / kPeriodsPerDay, static_cast<Period>(idx % kPeriodsPerDay)};
  }
  /// Hour of week at which the period opens (the 05:30 slot counts as hour 5).
  constexpr int first_hour_of_week() const {
    return day * 24 + kPeriodHours[static_cast<int>(period)].first;
  }
  friend constexpr bool operator==(PeriodIndex, PeriodIndex) = default;
};

inline std::string to_string(PeriodIndex p) {
  return std::string(kDayNames[p.day]) + "/" + std::string(period_name(p.period));
}

/// Parses "fri/morning" style labels.
inline std::optional<PeriodIndex> parse_period_index(std::string_view s) {
  auto slash = s.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  auto day = s.substr(0, slash);
  auto per = parse_period(s.substr(slash + 1));
  if (!per) return std::nullopt;
  for (int d = 0; d < kDaysPerWeek; ++d)
    if (kDayNames[d] == day) return PeriodIndex{d, *per};
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Time

using Date = std::chrono::sys_days;

/// Minute-precision local timestamp. No time zones: everything is city time.
struct Timestamp {
  Date date{};
  int minute_of_day = 0;

  int hour() const { return minute_of_day / 60; }
  /// Monday = 0 ... Sunday = 6.
  int weekday() const { return static_cast<int>(std::chrono::weekday(date).iso_encoding()) - 1; }
  std::int64_t minutes_since_epoch() const {
    return static_cast<std::int64_t>(date.time_since_epoch().count()) * 1440 + minute_of_day;
  }
  friend bool operator==(const Timestamp&, const Timestamp&) = default;
  friend auto operator<=>(const Timestamp& a, const Timestamp& b) {
    return a.minutes_since_epoch() <=> b.minutes_since_epoch();
  }
};

namespace detail {

inline std::optional<int> parse_fixed_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

inline std::string two_digits(int v) {
  std::string s(2, '0');
  s[0] = static_cast<char>('0' + (v / 10) % 10);
  s[1] = static_cast<char>('0' + v % 10);
  return s;
}

}  // namespace detail

/// Parses "YYYY-MM-DD".
inline std::optional<Date> parse_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  auto y = detail::parse_fixed_int(s.substr(0, 4));
  auto m = detail::parse_fixed_int(s.substr(5, 2));
  auto d = detail::parse_fixed_int(s.substr(8, 2));
  if (!y || !m || !d) return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{static_cast<unsigned>(*m)},
                                  std::chrono::day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

/// Parses "YYYY-MM-DDTHH:MM" (an optional ":00" seconds suffix is tolerated).
inline std::optional<Timestamp> parse_timestamp(std::string_view s) {
  if (s.size() == 19 && s.substr(16) == ":00") s = s.substr(0, 16);
  if (s.size() != 16 || (s[10] != 'T' && s[10] != ' ') || s[13] != ':') return std::nullopt;
  auto date = parse_date(s.substr(0, 10));
  auto hh = detail::parse_fixed_int(s.substr(11, 2));
  auto mm = detail::parse_fixed_int(s.substr(14, 2));
  if (!date || !hh || !mm || *hh > 23 || *mm > 59) return std::nullopt;
  return Timestamp{*date, *hh * 60 + *mm};
}

inline std::string format_date(Date d) {
  std::chrono::year_month_day ymd{d};
  int y = static_cast<int>(ymd.year());
  std::string out = std::to_string(y);
  while (out.size() < 4) out.insert(out.begin(), '0');
  return out + "-" + detail::two_digits(static_cast<int>(static_cast<unsigned>(ymd.month()))) + "-" +
         detail::two_digits(static_cast<int>(static_cast<unsigned>(ymd.day())));
}

inline std::string format_timestamp(const Timestamp& t) {
  return format_date(t.date) + "T" + detail::two_digits(t.minute_of_day / 60) + ":" +
         detail::two_digits(t.minute_of_day % 60);
}

/// Daily period of a timestamp; nullopt during the overnight gap [00:00, 05:30).
inline std::optional<PeriodIndex> assign_period(const Timestamp& t) {
  if (t.minute_of_day < kServiceStartMinute) return std::nullopt;
  auto p = period_of_hour(t.hour());
  if (!p) return std::nullopt;
  return PeriodIndex{t.weekday(), *p};
}

/// Inclusive range of calendar days under analysis.
struct Week {
  Date first{};
  Date last{};

  /// By default the range must span exactly seven consecutive days.
  static Week make(Date first, Date last, bool require_seven_days = true) {
    if (last < first) throw Error("week range ends before it starts");
    if (require_seven_days && (last - first).count() != kDaysPerWeek - 1)
      throw Error("week range must cover exactly 7 consecutive days, got " + format_date(first) +
                  ".." + format_date(last));
    return Week{first, last};
  }
  bool contains(Date d) const { return d >= first && d <= last; }
};

// ---------------------------------------------------------------------------
// Dense flow matrix

/// L x L row-major matrix of per-capita movement rates. Entry (i, j) is the
/// fraction of location i's population travelling to j in the matrix's window.
class FlowMatrix {
 public:
  FlowMatrix() = default;
  explicit FlowMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) {
    assert(i < n_ && j < n_);
    return data_[i * n_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < n_ && j < n_);
    return data_[i * n_ + j];
  }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * n_, n_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * n_, n_}; }
  /// Row-major flattening of all L^2 entries.
  std::span<const double> values() const { return data_; }

  double row_sum(std::size_t i) const {
    double s = 0.0;
    for (double v : row(i)) s += v;
    return s;
  }
  double col_sum(std::size_t j) const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += data_[i * n_ + j];
    return s;
  }
  bool is_zero() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v == 0.0; });
  }

  FlowMatrix& operator+=(const FlowMatrix& o) {
    if (o.n_ != n_) throw Error("flow matrix size mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  FlowMatrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  friend FlowMatrix operator*(double s, FlowMatrix m) { return m *= s; }
  friend bool operator==(const FlowMatrix&, const FlowMatrix&) = default;

  FlowMatrix transposed() const {
    FlowMatrix t(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Shortest round-trip decimal rendering; byte-stable for identical doubles.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error("number formatting failed");
  return std::string(buf.data(), end);
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("NA");
}

}  // namespace metapop
