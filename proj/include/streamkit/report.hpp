#pragma once

#include <string>

namespace streamkit {

// Renders the per-stage latency table, the displayed/dropped accounting and
// the recovery min/mean/max table from an artifact directory's CSV files.
// Pure function of the files: re-rendering never differs. SchemaMismatch
// when the CSVs are absent or malformed.
std::string render_report(const std::string& artifact_dir);

}  // namespace streamkit
