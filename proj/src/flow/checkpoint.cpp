#include "pitrecal/flow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "pitrecal/core/error.hpp"
#include "pitrecal/core/hash.hpp"

namespace pitrecal::flow {

namespace {

constexpr char kMagic[8] = {'P', 'I', 'T', 'F', 'L', 'O', 'W', '\n'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

std::string encode_parameters(const Eigen::VectorXd& theta) {
  std::string blob;
  blob.reserve(static_cast<std::size_t>(theta.size()) * 8);
  for (Eigen::Index i = 0; i < theta.size(); ++i) put_u64(blob, std::bit_cast<std::uint64_t>(theta[i]));
  return blob;
}

}  // namespace

void save_flow(const std::filesystem::path& path, const CouplingFlow& flow) {
  nlohmann::json header;
  header["format"] = "pitrecal-flow";
  header["format_version"] = 1;
  header["dim"] = flow.dim();
  header["conditioning_columns"] = flow.conditioning_columns();
  const auto& arch = flow.architecture();
  header["architecture"] = {{"layers", arch.layers},
                            {"hidden", arch.hidden},
                            {"hidden_layers", arch.hidden_layers},
                            {"scale_bound", arch.scale_bound}};
  nlohmann::json masks = nlohmann::json::array();
  for (const auto& layer : flow.layers()) {
    std::vector<int> m(layer.mask().begin(), layer.mask().end());
    masks.push_back(m);
  }
  header["masks"] = masks;
  header["center"] = flow.center();
  header["scale"] = flow.scale();
  header["model_fingerprint"] = flow.model_fingerprint();
  header["data_fingerprint"] = flow.data_fingerprint();
  header["pit_seed"] = flow.pit_seed();
  header["parameter_count"] = flow.parameter_count();
  header["byte_order"] = "little";
  const std::string blob = encode_parameters(flow.parameters());
  header["parameter_sha256"] = sha256_hex(blob);

  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  out += blob;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("failed writing " + path.string());
}

CouplingFlow load_flow(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open flow checkpoint " + path.string());
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < 16 || std::memcmp(data.data(), kMagic, 8) != 0) {
    throw SchemaError("not a flow checkpoint: " + path.string());
  }
  const std::uint64_t header_len = get_u64(bytes + 8);
  if (header_len > data.size() - 16) throw SchemaError("truncated flow checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed flow checkpoint header: ") + e.what());
  }
  try {
    if (header.at("format") != "pitrecal-flow" || header.at("format_version") != 1) {
      throw SchemaError("unsupported flow checkpoint format");
    }
    FlowArchitecture arch;
    const auto& a = header.at("architecture");
    arch.layers = a.at("layers").get<std::size_t>();
    arch.hidden = a.at("hidden").get<std::size_t>();
    arch.hidden_layers = a.at("hidden_layers").get<std::size_t>();
    arch.scale_bound = a.at("scale_bound").get<double>();
    CouplingFlow flow(header.at("dim").get<std::size_t>(),
                      header.at("conditioning_columns").get<std::vector<std::size_t>>(), arch);
    const auto masks = header.at("masks").get<std::vector<std::vector<int>>>();
    if (masks.size() != flow.layers().size()) throw SchemaError("flow checkpoint: layer count mismatch");
    for (std::size_t l = 0; l < masks.size(); ++l) {
      const auto& expect = flow.layers()[l].mask();
      if (!std::equal(masks[l].begin(), masks[l].end(), expect.begin(), expect.end(),
                      [](int a, std::uint8_t b) { return a == static_cast<int>(b); })) {
        throw SchemaError("flow checkpoint: unexpected mask in layer " + std::to_string(l));
      }
    }
    const auto count = header.at("parameter_count").get<std::size_t>();
    if (count != flow.parameter_count()) throw SchemaError("flow checkpoint: parameter count mismatch");
    if (data.size() - 16 - header_len != count * 8) throw SchemaError("flow checkpoint: truncated parameters");
    const std::string blob = data.substr(16 + header_len);
    if (sha256_hex(blob) != header.at("parameter_sha256").get<std::string>()) {
      throw SchemaError("flow checkpoint: parameter digest mismatch");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
    for (std::size_t i = 0; i < count; ++i) {
      flow.parameters()[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(get_u64(p + 8 * i));
    }
    flow.set_standardization(header.at("center").get<std::vector<double>>(),
                             header.at("scale").get<std::vector<double>>());
    flow.set_provenance(header.at("model_fingerprint").get<std::string>(),
                        header.at("data_fingerprint").get<std::string>(),
                        header.at("pit_seed").get<std::uint64_t>());
    return flow;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("flow checkpoint header: ") + e.what());
  }
}

}  // namespace pitrecal::flow
