#include "vmdnet/ingest.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vmdnet/error.hpp"

namespace vmdnet::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

// Parses exactly `width` digits at s[pos].
bool digits(std::string_view s, std::size_t pos, std::size_t width, int& out) {
  if (pos + width > s.size()) return false;
  out = 0;
  for (std::size_t i = pos; i < pos + width; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    out = out * 10 + (s[i] - '0');
  }
  return true;
}

[[noreturn]] void bad_timestamp(std::string_view text) {
  fail(ErrorCode::ParseError, "unparseable timestamp '" + std::string(text) + "'");
}

}  // namespace

std::vector<std::string> split_record(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  for (auto& f : fields) f = std::string(trim(f));
  return fields;
}

std::int64_t parse_timestamp(std::string_view text) {
  const std::string_view s = trim(text);
  std::int64_t seconds = 0;
  if (parse_number(s, seconds)) return seconds;

  int y, mo, d, h = 0, mi = 0, sec = 0;
  if (!digits(s, 0, 4, y) || s.size() < 10 || s[4] != '-' || !digits(s, 5, 2, mo) || s[7] != '-' || !digits(s, 8, 2, d))
    bad_timestamp(text);
  std::size_t pos = 10;
  if (pos < s.size() && (s[pos] == ' ' || s[pos] == 'T')) {
    if (!digits(s, pos + 1, 2, h) || pos + 3 >= s.size() || s[pos + 3] != ':' || !digits(s, pos + 4, 2, mi))
      bad_timestamp(text);
    pos += 6;
    if (pos < s.size() && s[pos] == ':') {
      if (!digits(s, pos + 1, 2, sec)) bad_timestamp(text);
      pos += 3;
      if (pos < s.size() && s[pos] == '.') {
        ++pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
      }
    }
  }
  std::int64_t offset = 0;
  if (pos < s.size() && s[pos] == 'Z') {
    ++pos;
  } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
    int oh, om;
    if (!digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' || !digits(s, pos + 4, 2, om))
      bad_timestamp(text);
    offset = (s[pos] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
    pos += 6;
  }
  if (pos != s.size()) bad_timestamp(text);

  using namespace std::chrono;
  const year_month_day date{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!date.ok() || h > 23 || mi > 59 || sec > 60) bad_timestamp(text);
  const auto days = sys_days(date).time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + sec - offset;
}

std::string format_timestamp(std::int64_t seconds) {
  using namespace std::chrono;
  const auto day_count = static_cast<std::int64_t>(std::floor(static_cast<double>(seconds) / 86400.0));
  const std::int64_t rem = seconds - day_count * 86400;
  const year_month_day date{sys_days{days{day_count}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()), static_cast<int>(rem / 3600),
                static_cast<int>(rem / 60 % 60), static_cast<int>(rem % 60));
  return buf;
}

Series ingest(const std::filesystem::path& path, const std::string& timestamp_column, const std::string& value_column) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  const std::string where = path.string() + ":";

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!trim(line).empty()) {
      header = split_record(line);
      break;
    }
  }
  if (header.empty()) fail(ErrorCode::EmptyFile, path.string() + " has no header row");

  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    std::string have;
    for (const auto& h : header) have += (have.empty() ? "" : ", ") + h;
    fail(ErrorCode::MissingColumn, path.string() + ": no column '" + name + "' (columns: " + have + ")");
  };
  const std::size_t value_idx = column(value_column);
  const bool with_time = !timestamp_column.empty();
  const std::size_t time_idx = with_time ? column(timestamp_column) : 0;

  Series series;
  std::size_t previous_line = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_record(line);
    const std::string at = where + std::to_string(line_no) + ": ";
    if (fields.size() != header.size())
      fail(ErrorCode::ParseError, at + "expected " + std::to_string(header.size()) + " fields, found " +
                                      std::to_string(fields.size()));
    double v = 0.0;
    if (!parse_number(fields[value_idx], v) || !std::isfinite(v))
      fail(ErrorCode::ParseError, at + "value '" + fields[value_idx] + "' is not a finite number");
    series.values.push_back(v);
    if (with_time) {
      std::int64_t t = 0;
      try {
        t = parse_timestamp(fields[time_idx]);
      } catch (const Error& e) {
        fail(ErrorCode::ParseError, at + e.what());
      }
      if (!series.timestamps.empty() && t <= series.timestamps.back())
        fail(ErrorCode::NonMonotonicTimestamps, at + "timestamp '" + fields[time_idx] +
                                                    "' is not after the one on line " + std::to_string(previous_line));
      series.timestamps.push_back(t);
      previous_line = line_no;
    }
  }
  if (series.values.empty()) fail(ErrorCode::EmptyFile, path.string() + " has a header but no data rows");
  return series;
}

}  // namespace vmdnet::io
