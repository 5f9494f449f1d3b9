#include "imobe/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "imobe/error.hpp"

namespace imobe::runtime {

std::string_view to_string(Lifecycle lifecycle) {
  switch (lifecycle) {
    case Lifecycle::Active: return "Active";
    case Lifecycle::Sleeping: return "Sleeping";
    case Lifecycle::Terminated: return "Terminated";
  }
  return "?";
}

AgentDescriptor make_descriptor(std::string agent_id, NodeKind kind, std::string home_container) {
  return {std::move(agent_id), kind, accessibility_of(kind), std::move(home_container)};
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(data_[pos_++]);
    return v;
  }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(Errc::Malformed, "truncated checkpoint");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kHeader = kCheckpointMagic.size() + 1;
constexpr std::size_t kTrailer = std::tuple_size_v<crypto::Digest>;

}  // namespace

CheckpointBlob encode_checkpoint(const AgentState& state) {
  std::string out(kCheckpointMagic);
  out.push_back(static_cast<char>(kCheckpointVersion));
  const auto& d = state.descriptor;
  put_str(out, d.agent_id);
  put_str(out, to_string(d.kind));
  put_str(out, to_string(d.accessibility));
  put_str(out, d.home_container);
  out.push_back(static_cast<char>(state.lifecycle));
  put_u32(out, static_cast<std::uint32_t>(state.mailbox.size()));
  for (const auto& e : state.mailbox) put_str(out, protocol::encode(e));
  put_str(out, state.internal);

  CheckpointBlob blob;
  blob.digest = crypto::sha256(out);
  out.append(reinterpret_cast<const char*>(blob.digest.data()), blob.digest.size());
  blob.bytes = std::move(out);
  return blob;
}

CheckpointBlob checkpoint_from_bytes(std::string bytes) {
  if (bytes.size() < kHeader + kTrailer) throw Error(Errc::Malformed, "checkpoint too short");
  CheckpointBlob blob;
  std::memcpy(blob.digest.data(), bytes.data() + bytes.size() - kTrailer, kTrailer);
  blob.bytes = std::move(bytes);
  return blob;
}

AgentState decode_checkpoint(const CheckpointBlob& blob) {
  const std::string_view all(blob.bytes);
  if (all.size() < kHeader + kTrailer) throw Error(Errc::Malformed, "checkpoint too short");
  const auto body = all.substr(0, all.size() - kTrailer);
  const auto trailer = all.substr(all.size() - kTrailer);
  const auto computed = crypto::sha256(body);
  const std::string_view expected(reinterpret_cast<const char*>(blob.digest.data()), kTrailer);
  const std::string_view actual(reinterpret_cast<const char*>(computed.data()), kTrailer);
  if (!crypto::equal_ct(actual, expected) || !crypto::equal_ct(actual, trailer)) {
    throw Error(Errc::DigestMismatch, "checkpoint digest does not verify");
  }
  if (body.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw Error(Errc::Malformed, "bad checkpoint magic");
  }
  if (static_cast<std::uint8_t>(body[kCheckpointMagic.size()]) != kCheckpointVersion) {
    throw Error(Errc::BadVersion, "unsupported checkpoint version");
  }

  Reader r(body.substr(kHeader));
  AgentState s;
  s.descriptor.agent_id = r.str();
  s.descriptor.kind = node_kind_from_string(r.str());
  s.descriptor.accessibility =
      r.str() == to_string(Accessibility::Private) ? Accessibility::Private : Accessibility::Public;
  s.descriptor.home_container = r.str();
  const auto lifecycle = r.u8();
  if (lifecycle > static_cast<std::uint8_t>(Lifecycle::Terminated)) {
    throw Error(Errc::Malformed, "bad lifecycle byte");
  }
  s.lifecycle = static_cast<Lifecycle>(lifecycle);
  for (auto n = r.u32(); n > 0; --n) s.mailbox.push_back(protocol::decode(r.str()));
  s.internal = r.str();
  if (!r.done()) throw Error(Errc::Malformed, "trailing bytes in checkpoint payload");
  return s;
}

void save_checkpoint(const CheckpointBlob& blob, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(blob.bytes.data(), static_cast<std::streamsize>(blob.bytes.size()));
  if (!out) throw Error(Errc::Io, "cannot write checkpoint " + path.string());
}

CheckpointBlob load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read checkpoint " + path.string());
  return checkpoint_from_bytes(
      std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

}  // namespace imobe::runtime
