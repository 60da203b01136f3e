#ifndef NESPPO_TRANSFER_H_
#define NESPPO_TRANSFER_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nesppo/nnet.h"

namespace nesppo {

inline constexpr char kCheckpointMagic[] = "NESPPO1\n";
inline constexpr int kCheckpointVersion = 1;

struct Provenance {
  std::string algorithm = "ppo";  // nes | ppo | noisy-ppo
  std::uint64_t run_seed = 0;
  std::uint64_t steps = 0;        // NES iterations or PPO env steps
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Checkpoint {
  NetSpec spec;
  ParamVector params;
  Provenance provenance;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

// Text form of a spec as used in checkpoint headers and the CLI, e.g.
//   activations=tanh,tanh;head=categorical;layer_kinds=plain,plain,plain;layer_sizes=4,128,128,2
std::string spec_to_string(const NetSpec& spec);
NetSpec spec_from_string(const std::string& text);

// File layout:
//   "NESPPO1\n"
//   u64 LE header length, then the UTF-8 header (key=value lines and
//   block=name,offset,length lines)
//   payload: every parameter as an LE IEEE-754 double, in layout order
//   u64 LE FNV-1a digest of all preceding bytes
std::vector<std::uint8_t> encode_checkpoint(const NetSpec& spec, const ParamVector& params,
                                            const Provenance& provenance);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const NetSpec& spec, const ParamVector& params,
                     const Provenance& provenance);
Checkpoint load_checkpoint(const std::string& path);

// First field on which `source` cannot feed `target`, or nullopt. Layer
// kinds must match except that a plain source may feed a noisy target.
std::optional<std::string> transfer_mismatch(const NetSpec& source, const NetSpec& target);

// Actor parameters for `target_spec` copied from `source`. A plain layer
// landing in a noisy one fills mu and gets freshly initialized sigma.
// Throws TransferError with the mismatch report.
ParamVector transplant(const Checkpoint& source, const NetSpec& target_spec);

}  // namespace nesppo

#endif  // NESPPO_TRANSFER_H_
