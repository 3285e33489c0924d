#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "drord/simgen.hpp"
#include "drord/types.hpp"

namespace drord {

// One line of the long-format CSV: subject_id, occasion, response, x,
// z_1..z_p. Empty cells and "NA" are missing; z cells must be present.
struct LongTableRow {
  std::string subject_id;
  int occasion = 0;
  std::optional<int> response;
  std::optional<double> x;
  Vec z;
};

std::vector<LongTableRow> parse_long_rows(std::istream& in, int p_z_expected = -1);

// Rows grouped into subject records: subjects ordered by id, occasions
// contiguous from 1. Row order in the file is irrelevant.
std::vector<SubjectRecord> rows_to_records(std::vector<LongTableRow> rows,
                                           const OrdinalSpec& spec);

std::vector<SubjectRecord> read_long_csv(const std::string& path, const OrdinalSpec& spec);

void write_long_csv(const std::string& path, const std::vector<SubjectRecord>& data,
                    const OrdinalSpec& spec);

// Two-sided normal-approximation p-value for an estimate / standard error pair.
double wald_p(double est, double se);

// Subcommand entry points. Throw ConfigError / DataError for bad inputs and
// Error subclasses for estimation failures; return a process exit code.
int simulate_command(const std::string& config_path, const std::string& out_dir,
                     std::optional<std::uint64_t> seed_override, int jobs);
int fit_command(const std::string& config_path, const std::string& data_path,
                const std::string& out_dir);
int report_command(const std::string& in_dir, const std::string& format);

}  // namespace drord
