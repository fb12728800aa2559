#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vmdnet/series.hpp"

namespace vmdnet::io {

/// Reads one value column from a comma-separated file with a header row.
/// Fields may be double-quoted; blank lines are skipped. With a non-empty
/// timestamp_column the timestamps must be strictly increasing.
/// Throws Io, EmptyFile, MissingColumn, ParseError (with the line number) or
/// NonMonotonicTimestamps.
Series ingest(const std::filesystem::path& path, const std::string& timestamp_column,
              const std::string& value_column);

/// Seconds since the Unix epoch from "YYYY-MM-DD[( |T)HH:MM[:SS[.fff]]][Z|(+|-)HH:MM]"
/// or a plain integer number of seconds. Throws ParseError.
std::int64_t parse_timestamp(std::string_view text);

/// "YYYY-MM-DDTHH:MM:SSZ".
std::string format_timestamp(std::int64_t seconds);

/// Splits one CSV record; quotes are removed and "" inside quotes becomes ".
std::vector<std::string> split_record(std::string_view line);

}  // namespace vmdnet::io
