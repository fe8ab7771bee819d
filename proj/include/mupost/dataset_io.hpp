#ifndef MUPOST_DATASET_IO_HPP
#define MUPOST_DATASET_IO_HPP

#include <optional>
#include <string>

#include "mupost/flow.hpp"
#include "mupost/forward_models.hpp"
#include "mupost/mat.hpp"

namespace mupost {

/// Raw row-major float64 blob. Shape lives in the JSON sidecars.
void save_matrix_f64(const std::string& path, const Matrix& m);
Matrix load_matrix_f64(const std::string& path, std::size_t cols);

/// Training sets persist as <prefix>.json + <prefix>.theta.f64 + <prefix>.x.f64.
void save_training_set(const std::string& prefix, const TrainingSet& set,
                       const std::string& protocol_path);
TrainingSet load_training_set(const std::string& prefix, std::string* protocol_path = nullptr);

/// Signals file: CSV, one voxel per row, m columns; optional leading
/// comment line `# protocol=<path>`.
Matrix load_signals_csv(const std::string& path, std::string* protocol_hint = nullptr);
void save_signals_csv(const std::string& path, const Matrix& signals,
                      const std::string& protocol_hint = "");

/// Epoch-indexed loss table: epoch,train_loss,val_loss rows.
void save_training_report_csv(const std::string& path, const TrainingReport& report);

} // namespace mupost

#endif
