#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mebart/data.hpp"
#include "mebart/synthetic.hpp"

namespace mebart {

/// CSV dataset schema: one header row; the response column is `y`; columns
/// prefixed `oracle_` carry ground truth (`oracle_f_true`, and
/// `oracle_x_true_<name>` per predictor); every other column is a predictor.
/// Lines starting with `#` are comments; `#sigma_e: a,b,...` supplies the
/// measurement-error sds (one value broadcasts to every column).
struct CsvOptions {
  /// Overrides any `#sigma_e:` comment.
  std::optional<std::vector<double>> sigma_e;
  /// Allow files without a `y` column (predict inputs).
  bool require_y = true;
};

ObservedDataset read_csv(std::istream& in, const std::string& source, const CsvOptions& opts = {});
/// Throws DataError with line and column for malformed content.
ObservedDataset load_csv(const std::string& path, const CsvOptions& opts = {});

/// Writes the schema above at full double precision. `scenario` adds
/// descriptive comments.
void write_csv(std::ostream& out, const ObservedDataset& data, const ScenarioSpec* scenario = nullptr);
void save_csv(const std::string& path, const ObservedDataset& data, const ScenarioSpec* scenario = nullptr);

/// Splits on commas; no quoting.
std::vector<std::string> split_fields(const std::string& line);

}  // namespace mebart
