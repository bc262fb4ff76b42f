// Run configuration: JSON file with the documented schema plus command-line
// overrides. Defaults follow the model's reference hyperparameters
// (500 epochs, learning rate 5e-4, d_z 10, d_h 100, checkpoints every 10
// epochs, truncation level 0.05).
#pragma once

#include <string>
#include <vector>

#include "wpvc/vlstm.hpp"

namespace wpvc::io {

struct RunConfig {
    // data
    std::string prices_path;
    std::string returns_path;
    std::string alignment = "intersection";

    // train/validation split (inclusive bounds on dates; empty = open)
    std::string train_end;
    std::string validation_start;

    vlstm::TrainingConfig training;

    // vine settings
    std::string weights_file; // optional per-pair edge weights (JSON)

    std::vector<double> var_levels{0.90, 0.95, 0.99};
    std::vector<double> portfolio_weights; // empty = equal weights
    double periods_per_year = 246.0;
    std::string strategy = "long_short"; // or "long_flat"
    std::string latent_copula = "dimensions"; // or "time" (windowed variant)

    std::string out_dir = "out";
    bool verbose = false;
};

RunConfig load_config(const std::string& path);
RunConfig default_config();

// Validates invariants (levels inside (0,1), weights summing to 1, ...).
void validate(const RunConfig& cfg);

vine::EdgeWeightMatrix load_edge_weights(const std::string& path, int n);

} // namespace wpvc::io
