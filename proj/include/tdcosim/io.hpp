#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tdcosim/cosim.hpp"
#include "tdcosim/dsolve.hpp"
#include "tdcosim/loadshape.hpp"
#include "tdcosim/netmodel.hpp"

namespace tdcosim::io {

inline constexpr std::string_view kCaseSchema = "1";
inline constexpr std::string_view kFeederSchema = "1";

struct FeederBinding {
  BusId bus = 0;
  std::string feeder_id;
  std::optional<std::string> loadshape_id;

  bool operator==(const FeederBinding&) const = default;
};

struct CaseDocument {
  std::string schema_version;
  TransmissionCase transmission;
  std::vector<FeederBinding> feeder_attachments;

  bool operator==(const CaseDocument&) const = default;
};

/// Parses the line-oriented case format (see docs/formats.md). Throws
/// ParseError with line and column on syntax errors, unknown keys, schema
/// violations and dangling references.
CaseDocument parse_case(std::string_view text);
std::string serialize_case(const CaseDocument& doc);

/// Parses a feeder file; the result passes validate_feeder.
Feeder parse_feeder(std::string_view text);
std::string serialize_feeder(const Feeder& f);

/// Two columns `minute,multiplier`, optional header row, contiguous minutes.
LoadshapeSeries parse_loadshape(std::string_view csv, std::string id);

/// Shortest text that reads back to the same double.
std::string format_number(double x);

std::string read_file(const std::filesystem::path& p);
CaseDocument load_case(const std::filesystem::path& p);
Feeder load_feeder(const std::filesystem::path& p);
/// The id is the file stem.
LoadshapeSeries load_loadshape(const std::filesystem::path& p);

/// Everything a run can write; absent parts produce no file.
struct ResultBundle {
  const CosimResult* result = nullptr;
  const Comparison* comparison = nullptr;
  const UnbalanceTable* table = nullptr;
  /// Snapshot runs: one step recorded at this minute.
  const StepResult* snapshot = nullptr;
  int snapshot_minute = 0;
  const DispatchRecord* snapshot_dispatch = nullptr;
  std::vector<Generator> generators;  ///< for dispatch.csv bus labels
};

/// Writes pcc_voltages.csv, coupling_trace.csv, convergence_table.csv,
/// dispatch.csv and comparison.csv as applicable. Output is deterministic.
/// Returns the files written.
std::vector<std::filesystem::path> write_results(const ResultBundle& bundle, const std::filesystem::path& dir);

}  // namespace tdcosim::io
