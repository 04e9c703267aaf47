#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aac/model.hpp"
#include "aac/optim.hpp"

namespace aac::harness {

struct CurveRow {
    double epoch = 0;
    double train_loss = 0;
    double val_ce = 0;
    double val_sbert = 0;
    double val_fense = 0;
    double lr = 0;
    friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

using LearningCurve = std::vector<CurveRow>;

/// Everything needed to resume a run or to reload a trained model.
struct Checkpoint {
    std::string config;      // serialized ExperimentConfig of the producing run
    std::string vocabulary;  // serialized decoder vocabulary
    std::size_t epoch = 0;   // epochs completed
    double val_fense = 0.0;  // at `epoch`
    std::size_t best_epoch = 0;
    double best_fense = 0.0;
    std::string rng_state;  // shuffling/dropout generator
    model::StateDict model;
    model::StateDict best_model;  // weights at best_epoch; empty in best-only files
    optim::AdamWState optimizer;
    LearningCurve curve;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Binary container: "AACCKPT\0", u32 version, then length-prefixed fields,
/// maps in key order. Deterministic, so save(load(f)) reproduces f exactly.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace aac::harness
