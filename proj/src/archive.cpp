#include "nsf/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "nsf/errors.hpp"

namespace nsf {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

using Blocks = std::map<std::string, Eigen::MatrixXd>;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("model archive truncated while reading " + what);
  return v;
}

void put_block(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Eigen::MatrixXd scalar_block(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

const Eigen::MatrixXd& need(const Blocks& b, const std::string& name) {
  const auto it = b.find(name);
  if (it == b.end()) throw ParseError("model archive lacks tensor '" + name + "'");
  return it->second;
}

Eigen::VectorXd need_vector(const Blocks& b, const std::string& name) {
  const auto& m = need(b, name);
  if (m.cols() != 1 && m.rows() * m.cols() != 0) throw ParseError("model archive tensor '" + name + "' is not a vector");
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

double need_scalar(const Blocks& b, const std::string& name) {
  const auto& m = need(b, name);
  if (m.size() != 1) throw ParseError("model archive tensor '" + name + "' is not a scalar");
  return m(0, 0);
}

}  // namespace

void save_archive(const std::filesystem::path& path, const ModelArchive& a) {
  const FactorModel& m = a.model;
  m.validate();
  nlohmann::json header;
  header["model"] = {{"kind", std::string(to_string(m.spec.kind()))},
                     {"L", m.spec.L},
                     {"T", m.spec.T},
                     {"nonnegative", m.spec.nonnegative},
                     {"likelihood", std::string(to_string(m.spec.likelihood))},
                     {"kernel", std::string(to_string(m.spec.kernel))},
                     {"M", m.spec.M},
                     {"S", m.spec.S}};
  header["feature_names"] = a.feature_names;
  header["config"] = a.config;

  Blocks blocks;
  blocks["W"] = m.W;
  blocks["V"] = m.V;
  blocks["aux"] = m.likelihood.aux;
  blocks["X_train"] = m.X_train;
  blocks["X_raw_train"] = a.X_raw_train;
  blocks["nu_train"] = a.nu_train;
  blocks["coord_center"] = a.coord_center;
  blocks["coord_scale"] = a.coord_scale;
  blocks["mf/delta"] = m.meanfield.delta;
  blocks["mf/omega"] = m.meanfield.omega;
  blocks["mf/prior_mean"] = m.meanfield.prior_mean;
  blocks["mf/prior_var"] = m.meanfield.prior_var;
  for (std::size_t l = 0; l < m.spatial.size(); ++l) {
    const auto& s = m.spatial[l];
    const std::string p = "spatial/" + std::to_string(l) + "/";
    blocks[p + "Z"] = s.Z;
    blocks[p + "delta"] = s.delta;
    blocks[p + "omega_chol"] = s.omega_chol;
    blocks[p + "beta0"] = scalar_block(s.beta0);
    blocks[p + "beta1"] = s.beta1;
    blocks[p + "amplitude"] = scalar_block(s.kernel.amplitude);
    blocks[p + "lengthscale"] = scalar_block(s.kernel.lengthscale);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write model archive " + path.string());
  out.write(kArchiveMagic, sizeof(kArchiveMagic));
  put<std::uint32_t>(out, kArchiveMajor);
  put<std::uint32_t>(out, kArchiveMinor);
  const std::string text = header.dump();
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(out, blocks.size());
  for (const auto& [name, mat] : blocks) put_block(out, name, mat);
  if (!out) throw ParseError("failed writing model archive " + path.string());
}

ModelArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open model archive " + path.string());
  char magic[sizeof(kArchiveMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kArchiveMagic, sizeof(magic)) != 0) {
    throw ParseError(path.string() + " is not a model archive");
  }
  const auto major = get<std::uint32_t>(in, "version");
  get<std::uint32_t>(in, "version");
  if (major != kArchiveMajor) {
    throw ParseError("model archive version " + std::to_string(major) + " is not supported (expected " +
                     std::to_string(kArchiveMajor) + ")");
  }
  const auto text_len = get<std::uint64_t>(in, "header length");
  std::string text(text_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text_len))) throw ParseError("model archive truncated in header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model archive header: ") + e.what());
  }

  Blocks blocks;
  const auto count = get<std::uint64_t>(in, "block count");
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name_len = get<std::uint32_t>(in, "block name");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw ParseError("model archive truncated in block name");
    const auto rows = get<std::uint64_t>(in, name);
    const auto cols = get<std::uint64_t>(in, name);
    Eigen::MatrixXd mat(static_cast<Index>(rows), static_cast<Index>(cols));
    if (!in.read(reinterpret_cast<char*>(mat.data()), static_cast<std::streamsize>(sizeof(double) * rows * cols))) {
      throw ParseError("model archive truncated in tensor '" + name + "'");
    }
    blocks.emplace(std::move(name), std::move(mat));
  }

  ModelArchive a;
  try {
    const auto& hm = header.at("model");
    FactorModel& m = a.model;
    m.spec.L = hm.at("L").get<int>();
    m.spec.T = hm.at("T").get<int>();
    m.spec.nonnegative = hm.at("nonnegative").get<bool>();
    m.spec.likelihood = likelihood_family_from_string(hm.at("likelihood").get<std::string>());
    m.spec.kernel = kernel_kind_from_string(hm.at("kernel").get<std::string>());
    m.spec.M = hm.at("M").get<Index>();
    m.spec.S = hm.at("S").get<int>();
    a.feature_names = header.at("feature_names").get<std::vector<std::string>>();
    a.config = header.value("config", nlohmann::json::object());

    m.W = need(blocks, "W");
    m.V = need(blocks, "V");
    m.likelihood.family = m.spec.likelihood;
    m.likelihood.aux = need_vector(blocks, "aux");
    m.X_train = need(blocks, "X_train");
    a.X_raw_train = need(blocks, "X_raw_train");
    a.nu_train = need_vector(blocks, "nu_train");
    a.coord_center = need_vector(blocks, "coord_center");
    a.coord_scale = need_vector(blocks, "coord_scale");
    m.meanfield.delta = need(blocks, "mf/delta");
    m.meanfield.omega = need(blocks, "mf/omega");
    m.meanfield.prior_mean = need_vector(blocks, "mf/prior_mean");
    m.meanfield.prior_var = need_vector(blocks, "mf/prior_var");
    for (int l = 0; l < m.spec.T; ++l) {
      const std::string p = "spatial/" + std::to_string(l) + "/";
      SpatialComponentState<double> s;
      s.Z = need(blocks, p + "Z");
      s.delta = need_vector(blocks, p + "delta");
      s.omega_chol = need(blocks, p + "omega_chol");
      s.beta0 = need_scalar(blocks, p + "beta0");
      s.beta1 = need_vector(blocks, p + "beta1");
      s.kernel.kind = m.spec.kernel;
      s.kernel.amplitude = need_scalar(blocks, p + "amplitude");
      s.kernel.lengthscale = need_scalar(blocks, p + "lengthscale");
      m.spatial.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model archive header: ") + e.what());
  }
  try {
    a.model.validate();
  } catch (const std::exception& e) {
    throw ParseError(std::string("model archive is inconsistent: ") + e.what());
  }
  if (static_cast<Index>(a.feature_names.size()) != a.model.features()) {
    throw ParseError("model archive: feature names do not match the loadings");
  }
  return a;
}

}  // namespace nsf
