#include "bkg/params.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "bkg/bytes.hpp"
#include "bkg/text.hpp"

namespace bkg {

namespace {

constexpr char kCkptMagic[4] = {'B', 'K', 'G', 'M'};
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace

TokenVocab TokenVocab::from_graph(const KnowledgeGraph& graph) {
  std::set<std::string> uniq;
  for (ConceptId c = 0; c < graph.concept_count(); ++c)
    for (const std::string& tok : tokenize(graph.surface(c))) uniq.insert(tok);
  TokenVocab v;
  v.tokens.reserve(uniq.size() + 1);
  v.tokens.push_back("<unk>");
  v.tokens.insert(v.tokens.end(), uniq.begin(), uniq.end());
  for (std::uint32_t i = 0; i < v.tokens.size(); ++i) v.index[v.tokens[i]] = i;
  return v;
}

ModelParams::ModelParams(const Dims& dm) : dims(dm) {
  if (dims.vocab < 1 || dims.d < 1 || dims.L < 0 || dims.max_len < 1 ||
      dims.max_dist < 0 || dims.n_relations < 1)
    throw ConfigError("model dimensions out of range");
  W_e.setZero(dims.vocab, dims.d);
  W_p.setZero(dims.max_len, dims.d);
  blocks.resize(static_cast<std::size_t>(dims.L));
  for (Block& b : blocks) {
    b.Wq.setZero(dims.d, dims.d);
    b.Wk.setZero(dims.d, dims.d);
    b.Wv.setZero(dims.d, dims.d);
    b.Wff1.setZero(dims.d, 2 * dims.d);
    b.bff1.setZero(1, 2 * dims.d);
    b.Wff2.setZero(2 * dims.d, dims.d);
    b.bff2.setZero(1, dims.d);
  }
  bi_w1.setZero(dims.d, 1);
  bi_w2.setZero(1, dims.d);
  bi_w3.setZero(1, dims.d);
  mlp_W.setZero(2 * dims.d, dims.d);
  mlp_b.setZero(1, dims.d);
  W_d.setZero(dims.dist_rows(), dims.d);
  W_r.setZero(dims.n_relations, dims.d);
  W_2.setZero(5 * dims.d, dims.d);
  W_3.setZero(2 * dims.d, dims.d);
}

void ModelParams::init(Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(dims.d));
  for (auto& [name, mat] : tensors()) {
    bool is_bias = name.find("bff") != std::string::npos || name == "mlp_b";
    if (is_bias) {
      mat->setZero();
      continue;
    }
    for (Eigen::Index i = 0; i < mat->rows(); ++i)
      for (Eigen::Index j = 0; j < mat->cols(); ++j)
        (*mat)(i, j) = rng.next_uniform(-bound, bound);
  }
}

std::vector<std::pair<std::string, DMat*>> ModelParams::tensors() {
  std::vector<std::pair<std::string, DMat*>> out;
  out.emplace_back("W_e", &W_e);
  out.emplace_back("W_p", &W_p);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    std::string prefix = "block" + std::to_string(b) + ".";
    out.emplace_back(prefix + "Wq", &blocks[b].Wq);
    out.emplace_back(prefix + "Wk", &blocks[b].Wk);
    out.emplace_back(prefix + "Wv", &blocks[b].Wv);
    out.emplace_back(prefix + "Wff1", &blocks[b].Wff1);
    out.emplace_back(prefix + "bff1", &blocks[b].bff1);
    out.emplace_back(prefix + "Wff2", &blocks[b].Wff2);
    out.emplace_back(prefix + "bff2", &blocks[b].bff2);
  }
  out.emplace_back("bi_w1", &bi_w1);
  out.emplace_back("bi_w2", &bi_w2);
  out.emplace_back("bi_w3", &bi_w3);
  out.emplace_back("mlp_W", &mlp_W);
  out.emplace_back("mlp_b", &mlp_b);
  out.emplace_back("W_d", &W_d);
  out.emplace_back("W_r", &W_r);
  out.emplace_back("W_2", &W_2);
  out.emplace_back("W_3", &W_3);
  return out;
}

std::vector<std::pair<std::string, const DMat*>> ModelParams::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  std::vector<std::pair<std::string, const DMat*>> out;
  out.reserve(mut.size());
  for (auto& [name, mat] : mut) out.emplace_back(std::move(name), mat);
  return out;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t vocab_checksum) {
  std::ostringstream buf;
  BinWriter w(buf);
  w.bytes(kCkptMagic, 4);
  w.u32(kCkptVersion);
  w.u32(static_cast<std::uint32_t>(params.dims.d));
  w.u32(static_cast<std::uint32_t>(params.dims.L));
  w.u64(vocab_checksum);
  auto named = params.tensors();
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, mat] : named) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(mat->rows()));
    w.u32(static_cast<std::uint32_t>(mat->cols()));
    for (Eigen::Index i = 0; i < mat->rows(); ++i)
      for (Eigen::Index j = 0; j < mat->cols(); ++j) w.f64((*mat)(i, j));
  }
  write_file_atomic(path, buf.str());
}

LoadedCheckpoint load_checkpoint(const std::string& path,
                                 std::optional<std::uint64_t> expected_checksum) {
  std::string raw = read_file(path);
  std::istringstream in(raw);
  BinReader r(in);

  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCkptMagic, 4) != 0)
    throw FormatError(FormatError::Kind::bad_magic, "not a checkpoint file: " + path);
  if (std::uint32_t ver = r.u32(); ver != kCkptVersion)
    throw FormatError(FormatError::Kind::version_mismatch,
                      "unsupported checkpoint version " + std::to_string(ver));
  auto d = static_cast<Eigen::Index>(r.u32());
  auto L = static_cast<Eigen::Index>(r.u32());
  std::uint64_t checksum = r.u64();
  if (expected_checksum && checksum != *expected_checksum)
    throw FormatError(FormatError::Kind::checksum_mismatch,
                      "checkpoint was trained against a different vocabulary");
  if (d < 1 || d > (1 << 16) || L < 0 || L > 64)
    throw FormatError(FormatError::Kind::corrupt, "checkpoint dimensions out of range");

  std::uint32_t count = r.u32();
  std::vector<std::pair<std::string, DMat>> raw_tensors;
  raw_tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = r.str(1 << 10);
    auto rows = static_cast<Eigen::Index>(r.u32());
    auto cols = static_cast<Eigen::Index>(r.u32());
    if (rows < 0 || cols < 0 || rows > (1 << 24) || cols > (1 << 24) ||
        (rows > 0 && cols > (1 << 28) / rows))
      throw FormatError(FormatError::Kind::corrupt, "tensor shape out of range: " + name);
    DMat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.f64();
    if (!m.allFinite())
      throw FormatError(FormatError::Kind::corrupt, "non-finite tensor: " + name);
    raw_tensors.emplace_back(std::move(name), std::move(m));
  }
  if (in.peek() != std::istringstream::traits_type::eof())
    throw FormatError(FormatError::Kind::corrupt, "trailing bytes in checkpoint");

  auto shape_of = [&](const std::string& name) -> const DMat* {
    for (const auto& [n, m] : raw_tensors)
      if (n == name) return &m;
    return nullptr;
  };
  const DMat* we = shape_of("W_e");
  const DMat* wp = shape_of("W_p");
  const DMat* wd = shape_of("W_d");
  const DMat* wr = shape_of("W_r");
  if (we == nullptr || wp == nullptr || wd == nullptr || wr == nullptr)
    throw FormatError(FormatError::Kind::corrupt, "checkpoint missing core tensors");

  Dims dims;
  dims.d = d;
  dims.L = L;
  dims.vocab = we->rows();
  dims.max_len = wp->rows();
  dims.max_dist = wd->rows() - 2;
  dims.n_relations = wr->rows();
  if (dims.vocab < 1 || dims.max_len < 1 || dims.max_dist < 0 || dims.n_relations < 1)
    throw FormatError(FormatError::Kind::corrupt, "checkpoint table shapes out of range");

  LoadedCheckpoint out;
  out.vocab_checksum = checksum;
  out.params = ModelParams(dims);
  auto named = out.params.tensors();
  if (named.size() != raw_tensors.size())
    throw FormatError(FormatError::Kind::corrupt, "unexpected checkpoint tensor count");
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto& [want_name, dst] = named[i];
    auto& [got_name, src] = raw_tensors[i];
    if (want_name != got_name)
      throw FormatError(FormatError::Kind::corrupt,
                        "unexpected checkpoint tensor order: " + got_name);
    if (src.rows() != dst->rows() || src.cols() != dst->cols())
      throw FormatError(FormatError::Kind::corrupt, "tensor shape mismatch: " + got_name);
    *dst = std::move(src);
  }
  return out;
}

}  // namespace bkg
