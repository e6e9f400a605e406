#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sfd/error.hpp"
#include "sfd/policy.hpp"

namespace sfd {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'D', '1'};
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

nlohmann::json config_to_json(const NetConfig& cfg) {
  nlohmann::json trunk = nlohmann::json::array();
  for (const auto& l : cfg.trunk) {
    trunk.push_back({{"kind", l.kind == LayerSpec::Kind::conv ? "conv" : "dense"},
                     {"out", l.out},
                     {"kernel", l.kernel},
                     {"stride", l.stride},
                     {"relu", l.relu}});
  }
  return {{"input_width", cfg.input_width}, {"input_height", cfg.input_height}, {"trunk", trunk}};
}

NetConfig config_from_json(const nlohmann::json& j) {
  NetConfig cfg;
  cfg.input_width = j.at("input_width").get<int>();
  cfg.input_height = j.at("input_height").get<int>();
  for (const auto& l : j.at("trunk")) {
    LayerSpec s;
    const auto kind = l.at("kind").get<std::string>();
    if (kind == "conv") {
      s.kind = LayerSpec::Kind::conv;
    } else if (kind == "dense") {
      s.kind = LayerSpec::Kind::dense;
    } else {
      throw IoError("unknown layer kind '" + kind + "' in checkpoint");
    }
    s.out = l.at("out").get<int>();
    s.kernel = l.at("kernel").get<int>();
    s.stride = l.at("stride").get<int>();
    s.relu = l.at("relu").get<bool>();
    cfg.trunk.push_back(s);
  }
  return cfg;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::string encode_checkpoint(const PolicyNet& net) {
  nlohmann::json header;
  header["format"] = "SFD1";
  header["version"] = kFormatVersion;
  header["seed"] = net.seed();
  header["config"] = config_to_json(net.config());
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : net.params()) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  header["tensors"] = tensors;
  const std::string text = header.dump();

  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& t : net.params()) {
    for (double v : t.values) {
      const auto f = static_cast<float>(v);
      char bytes[4];
      std::memcpy(bytes, &f, 4);
      out.append(bytes, 4);
    }
  }
  return out;
}

PolicyNet decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("not an SFD1 checkpoint");
  }
  const std::uint32_t header_len = get_u32(bytes, 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(header_len)) throw IoError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(8, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("version", 0) != kFormatVersion) throw IoError("unsupported checkpoint version");

  const NetConfig cfg = config_from_json(header.at("config"));
  const auto seed = header.at("seed").get<std::uint64_t>();
  std::vector<Tensor> params;
  std::size_t at = 8 + header_len;
  for (const auto& tj : header.at("tensors")) {
    Tensor t;
    t.name = tj.at("name").get<std::string>();
    t.shape = tj.at("shape").get<std::vector<int>>();
    std::size_t n = 1;
    for (int d : t.shape) n *= static_cast<std::size_t>(d);
    if (bytes.size() < at + 4 * n) throw IoError("truncated checkpoint payload");
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, bytes.data() + at + 4 * i, 4);
      t.values[i] = static_cast<double>(f);
    }
    at += 4 * n;
    params.push_back(std::move(t));
  }
  if (at != bytes.size()) throw IoError("trailing bytes after checkpoint payload");
  return PolicyNet::from_tensors(cfg, seed, std::move(params));
}

void save_checkpoint(const PolicyNet& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint '" + path + "'");
  const std::string bytes = encode_checkpoint(net);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

PolicyNet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace sfd
