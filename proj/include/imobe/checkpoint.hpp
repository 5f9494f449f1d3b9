#pragma once

// Checkpoint file format:
//
//   "IMOBE-CKPT\0"  11 bytes magic
//   0x01            format version
//   payload         length-prefixed fields in fixed order:
//                     agent_id, kind, accessibility, home_container,
//                     lifecycle (1 byte), mailbox count (u32) followed by
//                     each envelope's canonical JSON, internal state
//   digest          32 bytes, SHA-256 over magic + version + payload
//
// Lengths and counts are unsigned 32-bit big-endian.

#include <filesystem>
#include <string>
#include <string_view>

#include "imobe/agent.hpp"
#include "imobe/crypto.hpp"

namespace imobe::runtime {

inline constexpr std::string_view kCheckpointMagic{"IMOBE-CKPT\0", 11};
inline constexpr std::uint8_t kCheckpointVersion = 0x01;

struct CheckpointBlob {
  std::string bytes;  // the whole file, trailer included
  crypto::Digest digest{};

  bool operator==(const CheckpointBlob&) const = default;
};

CheckpointBlob encode_checkpoint(const AgentState& state);
// Verifies magic, version and digest. Throws Error(DigestMismatch) or
// Error(Malformed).
AgentState decode_checkpoint(const CheckpointBlob& blob);
// Wraps raw file bytes; the digest is read from the trailer.
CheckpointBlob checkpoint_from_bytes(std::string bytes);

void save_checkpoint(const CheckpointBlob& blob, const std::filesystem::path& path);
CheckpointBlob load_checkpoint(const std::filesystem::path& path);

}  // namespace imobe::runtime
