#pragma once

// Checkpoint directory:
//   checkpoint.json  format "HPDPCKPT1", config, shape, epoch, best_val and an
//                    index of {name, offset, rows, cols} records
//   arrays.bin       every indexed array, row-major little-endian f64, back to back
//
// Offsets and sizes count f64 values, not bytes.
//
// Prototype banks use the same layout with format "HPDPPROTO1".

#include "hpdp/priors.hpp"
#include "hpdp/trainer.hpp"

#include <filesystem>

namespace hpdp {

inline constexpr const char* kCheckpointFormat = "HPDPCKPT1";
inline constexpr const char* kPrototypeFormat = "HPDPPROTO1";

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
// Throws InputError on a missing file, wrong format tag, or shape mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

void save_prototypes(const std::filesystem::path& dir, const PrototypeBank& bank);
PrototypeBank load_prototypes(const std::filesystem::path& dir);

}  // namespace hpdp
