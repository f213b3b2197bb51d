#include "provtrace/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "provtrace/errors.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace provtrace {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'P', 'T', 'C', 'K', 'P', 'T', '1', '\n'};
}

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const std::vector<const Param*>& params) {
  json h;
  h["kind"] = header.kind;
  h["config"] = json::parse(header.config_json);
  h["vocab_fingerprint"] = header.vocab_fingerprint;
  h["step"] = header.step;
  json plist = json::array();
  for (const Param* p : params) {
    plist.push_back(
        {{"name", p->name}, {"rows", p->value.rows}, {"cols", p->value.cols}});
  }
  h["params"] = std::move(plist);
  const std::string hs = h.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Param* p : params) {
    out.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.data.size() *
                                           sizeof(double)));
  }
  if (!out) throw IoError("short write to checkpoint: " + path);
}

namespace {

json read_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ContractError("not a checkpoint file: " + path);
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError("truncated checkpoint header: " + path);
  return json::parse(hs);
}

CheckpointHeader header_from_json(const json& h) {
  CheckpointHeader out;
  out.kind = h.at("kind").get<std::string>();
  out.config_json = h.at("config").dump();
  out.vocab_fingerprint = h.at("vocab_fingerprint").get<std::uint64_t>();
  out.step = h.at("step").get<std::uint64_t>();
  return out;
}

}  // namespace

CheckpointHeader peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return header_from_json(read_header(in, path));
}

CheckpointHeader load_checkpoint(const std::string& path,
                                 const std::vector<Param*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  json h = read_header(in, path);
  const auto& plist = h.at("params");
  if (plist.size() != params.size()) {
    throw ContractError("checkpoint parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& meta = plist[i];
    Param& p = *params[i];
    if (meta.at("name").get<std::string>() != p.name ||
        meta.at("rows").get<std::size_t>() != p.value.rows ||
        meta.at("cols").get<std::size_t>() != p.value.cols) {
      throw ContractError("checkpoint layout mismatch at '" + p.name + "'");
    }
    in.read(reinterpret_cast<char*>(p.value.data.data()),
            static_cast<std::streamsize>(p.value.data.size() *
                                         sizeof(double)));
    if (!in) throw IoError("truncated checkpoint payload: " + path);
  }
  return header_from_json(h);
}

}  // namespace provtrace
