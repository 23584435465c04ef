#include "cforge/activations.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <regex>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "cforge/error.hpp"
#include "cforge/io.hpp"
#include "cforge/random.hpp"

namespace cforge::acts {

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

bool all_finite(const FloatMatrix& m) { return m.allFinite(); }

}  // namespace

std::string sample_ids_digest(const std::vector<std::string>& ids) {
  std::string joined;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) joined += '\n';
    joined += ids[i];
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(joined.data(), joined.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::io, "sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

void ActivationMatrix::validate() const {
  if (layer_index < 0) throw Error(Errc::invalid_argument, "negative layer index");
  if (static_cast<std::size_t>(data.rows()) != sample_ids.size()) {
    throw Error(Errc::invalid_argument, "activation matrix has " + std::to_string(data.rows()) + " rows but " +
                                            std::to_string(sample_ids.size()) + " sample ids");
  }
  if (!all_finite(data)) throw Error(Errc::numerical, "activation matrix contains NaN or Inf");
}

std::string encode_actv(const FloatMatrix& m) {
  if (!all_finite(m)) throw Error(Errc::numerical, "refusing to write NaN/Inf activations");
  if (m.rows() > 0xFFFFFFFFLL || m.cols() > 0xFFFFFFFFLL) throw Error(Errc::invalid_argument, "matrix too large");
  std::string out;
  out.reserve(kActvHeaderBytes + static_cast<std::size_t>(m.size()) * 4);
  out += "ACTV";
  out.push_back(static_cast<char>(kActvVersion));
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(m.data()[i]));
  return out;
}

FloatMatrix decode_actv(std::string_view bytes) {
  if (bytes.size() < kActvHeaderBytes) throw Error(Errc::parse, "ACTV header truncated");
  if (bytes.substr(0, 4) != "ACTV") throw Error(Errc::parse, "bad ACTV magic");
  if (static_cast<std::uint8_t>(bytes[4]) != kActvVersion) {
    throw Error(Errc::parse, "unsupported ACTV version " + std::to_string(static_cast<unsigned char>(bytes[4])));
  }
  const std::uint64_t rows = get_u32(bytes, 5);
  const std::uint64_t cols = get_u32(bytes, 9);
  const std::uint64_t available = (bytes.size() - kActvHeaderBytes) / 4;
  // rows * cols fits in 64 bits, the extra factor of four might not
  if (cols != 0 && rows > available / cols) {
    throw Error(Errc::parse, "ACTV payload truncated: header declares " + std::to_string(rows) + "x" +
                                 std::to_string(cols) + " but only " +
                                 std::to_string(available) + " floats present");
  }
  if (bytes.size() != kActvHeaderBytes + rows * cols * 4) throw Error(Errc::parse, "ACTV file has trailing bytes");
  FloatMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::uint64_t i = 0; i < rows * cols; ++i) {
    m.data()[i] = std::bit_cast<float>(get_u32(bytes, kActvHeaderBytes + 4 * i));
  }
  if (!all_finite(m)) throw Error(Errc::numerical, "ACTV payload contains NaN or Inf");
  return m;
}

fs::path sidecar_path(const fs::path& actv_path) {
  auto p = actv_path;
  p += ".meta.json";
  return p;
}

void write_actv(const ActivationMatrix& matrix, const fs::path& path) {
  matrix.validate();
  nlohmann::json meta{{"model_id", matrix.model_id},
                      {"layer_index", matrix.layer_index},
                      {"pooling", matrix.pooling},
                      {"concept", matrix.concept_qid},
                      {"n_rows", matrix.rows()},
                      {"n_cols", matrix.cols()},
                      {"sample_ids", matrix.sample_ids},
                      {"sample_ids_sha256", sample_ids_digest(matrix.sample_ids)}};
  io::write_atomic(path, encode_actv(matrix.data));
  io::write_json(sidecar_path(path), meta);
}

ActivationMatrix read_actv(const fs::path& path) {
  ActivationMatrix m;
  m.data = decode_actv(io::read_file(path));
  const auto meta = io::read_json(sidecar_path(path));
  try {
    m.model_id = meta.at("model_id").get<std::string>();
    m.layer_index = meta.at("layer_index").get<int>();
    m.pooling = meta.value("pooling", std::string("mean"));
    m.concept_qid = meta.value("concept", std::string{});
    m.sample_ids = meta.at("sample_ids").get<std::vector<std::string>>();
    if (meta.contains("sample_ids_sha256") && meta["sample_ids_sha256"] != sample_ids_digest(m.sample_ids)) {
      throw Error(Errc::parse, sidecar_path(path).string() + ": sample id checksum mismatch");
    }
    if (meta.contains("n_cols") && meta["n_cols"].get<Eigen::Index>() != m.cols()) {
      throw Error(Errc::parse, path.string() + ": sidecar n_cols disagrees with payload");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, sidecar_path(path).string() + ": " + e.what());
  }
  if (static_cast<std::size_t>(m.rows()) != m.sample_ids.size()) {
    throw Error(Errc::parse, path.string() + ": payload has " + std::to_string(m.rows()) + " rows, sidecar lists " +
                                 std::to_string(m.sample_ids.size()) + " samples");
  }
  return m;
}

fs::path layer_path(const fs::path& acts_root, std::string_view model_id, std::string_view qid, std::string_view split,
                    int layer) {
  return acts_root / std::string(model_id) / std::string(qid) / std::string(split) /
         ("layer_" + std::to_string(layer) + ".actv");
}

LayerStack load_layer_stack(const fs::path& acts_root, std::string_view model_id, std::string_view qid,
                            std::string_view split) {
  const auto dir = acts_root / std::string(model_id) / std::string(qid) / std::string(split);
  if (!fs::is_directory(dir)) throw Error(Errc::not_found, "no activations at " + dir.string());
  static const std::regex pattern(R"(layer_(\d+)\.actv)");
  LayerStack stack;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch match;
    const auto name = entry.path().filename().string();
    if (!std::regex_match(name, match, pattern)) continue;
    auto m = read_actv(entry.path());
    const int layer = std::stoi(match[1]);
    if (m.layer_index != layer) {
      throw Error(Errc::parse, entry.path().string() + ": sidecar layer " + std::to_string(m.layer_index) +
                                   " disagrees with file name");
    }
    stack.emplace(layer, std::move(m));
  }
  if (stack.empty()) throw Error(Errc::not_found, "no layer_<i>.actv files in " + dir.string());
  const auto width = stack.begin()->second.cols();
  for (const auto& [layer, m] : stack) {
    if (m.cols() != width) throw Error(Errc::parse, "layers in " + dir.string() + " differ in width");
  }
  return stack;
}

ProbeSet make_probe_set(const ActivationMatrix& pos, const ActivationMatrix& neg, const ProbeSetOptions& options) {
  if (pos.cols() != neg.cols()) {
    throw Error(Errc::invalid_argument, "positive width " + std::to_string(pos.cols()) + " != negative width " +
                                            std::to_string(neg.cols()));
  }
  if (pos.layer_index != neg.layer_index) throw Error(Errc::invalid_argument, "positive/negative layer mismatch");
  if (pos.model_id != neg.model_id) throw Error(Errc::invalid_argument, "positive/negative model mismatch");
  if (pos.rows() == 0 || neg.rows() == 0) throw Error(Errc::invalid_argument, "empty class in probe set");
  if (!(options.train_frac > 0.0 && options.train_frac < 1.0)) {
    throw Error(Errc::invalid_argument, "train fraction must lie in (0, 1)");
  }
  const auto n = std::min({options.n_per_class, static_cast<std::size_t>(pos.rows()),
                           static_cast<std::size_t>(neg.rows())});
  if (n < 2) throw Error(Errc::invalid_argument, "need at least two samples per class");
  auto n_train = static_cast<std::size_t>(std::lround(static_cast<double>(n) * options.train_frac));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  Rng pos_rng(options.seed);
  Rng neg_rng(options.negative_seed.value_or(options.seed) ^ 0x9E3779B97F4A7C15ULL);
  const auto pos_idx = sample_indices(static_cast<std::size_t>(pos.rows()), n, pos_rng);
  const auto neg_idx = sample_indices(static_cast<std::size_t>(neg.rows()), n, neg_rng);

  struct Row {
    const ActivationMatrix* src;
    std::size_t index;
    int label;
  };
  std::vector<Row> train;
  std::vector<Row> test;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? train : test).push_back({&pos, pos_idx[i], +1});
  }
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? train : test).push_back({&neg, neg_idx[i], -1});
  }
  Rng order_rng(options.seed + 1);
  shuffle(train, order_rng);

  auto fill = [](const std::vector<Row>& rows, Eigen::MatrixXd& x, Labels& y, std::vector<std::string>& ids) {
    const auto d = rows.front().src->cols();
    x.resize(static_cast<Eigen::Index>(rows.size()), d);
    y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto i = static_cast<Eigen::Index>(r);
      x.row(i) = rows[r].src->data.row(static_cast<Eigen::Index>(rows[r].index)).cast<double>();
      y(i) = rows[r].label;
      ids.push_back(rows[r].src->sample_ids[rows[r].index]);
    }
  };
  ProbeSet set;
  fill(train, set.x_train, set.y_train, set.train_ids);
  fill(test, set.x_test, set.y_test, set.test_ids);
  set.seed = options.seed;
  set.layer_index = pos.layer_index;
  set.concept_qid = pos.concept_qid;
  set.model_id = pos.model_id;
  set.per_class = n;
  return set;
}

void stack_labeled(const ActivationMatrix& pos, const ActivationMatrix& neg, Eigen::MatrixXd& x, Labels& y) {
  if (pos.cols() != neg.cols()) throw Error(Errc::invalid_argument, "positive/negative width mismatch");
  x.resize(pos.rows() + neg.rows(), pos.cols());
  x.topRows(pos.rows()) = pos.data.cast<double>();
  x.bottomRows(neg.rows()) = neg.data.cast<double>();
  y.resize(pos.rows() + neg.rows());
  y.head(pos.rows()).setConstant(1);
  y.tail(neg.rows()).setConstant(-1);
}

std::vector<std::size_t> FoldPlan::test_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::train_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) out.push_back(i);
  }
  return out;
}

FoldPlan make_folds(std::size_t n_samples, const Labels& labels, int k, std::uint64_t seed) {
  if (k < 2) throw Error(Errc::invalid_argument, "need at least two folds");
  if (n_samples < static_cast<std::size_t>(k)) {
    throw Error(Errc::invalid_argument, std::to_string(n_samples) + " samples cannot fill " + std::to_string(k) + " folds");
  }
  if (static_cast<std::size_t>(labels.size()) != n_samples) throw Error(Errc::invalid_argument, "label count mismatch");
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const int y = labels(static_cast<Eigen::Index>(i));
    if (y == 1) {
      pos.push_back(i);
    } else if (y == -1) {
      neg.push_back(i);
    } else {
      throw Error(Errc::invalid_argument, "labels must be +1 or -1");
    }
  }
  if (pos.empty() || neg.empty()) throw Error(Errc::invalid_argument, "folds need both labels present");
  Rng rng(seed);
  shuffle(pos, rng);
  shuffle(neg, rng);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.fold_of.assign(n_samples, -1);
  std::size_t dealt = 0;
  for (auto i : pos) plan.fold_of[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(k));
  for (auto i : neg) plan.fold_of[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(k));
  return plan;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

Labels select_rows(const Labels& y, const std::vector<std::size_t>& rows) {
  Labels out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Eigen::Index>(r)) = y(static_cast<Eigen::Index>(rows[r]));
  return out;
}

}  // namespace cforge::acts
