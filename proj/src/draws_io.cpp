#include "mebart/draws_io.hpp"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "mebart/data.hpp"

namespace mebart {

namespace {

constexpr char magic[8] = {'M', 'E', 'B', 'D', 'R', 'A', 'W', 'S'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <class T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void block(const std::string& name, const Matrix<double>& m) {
    str(name);
    put<std::uint64_t>(m.rows());
    put<std::uint64_t>(m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j)
      for (std::size_t i = 0; i < m.rows(); ++i) put(m(i, j));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}
  template <class T>
  T get() {
    T v;
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) fail("truncated file");
    return v;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 20)) fail("corrupt string length");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) fail("truncated file");
    return s;
  }
  Matrix<double> block(const std::string& expect) {
    const std::string name = str();
    if (name != expect) fail("expected block '" + expect + "', found '" + name + "'");
    const auto rows = get<std::uint64_t>();
    const auto cols = get<std::uint64_t>();
    if (rows > (1ull << 32) || cols > (1ull << 32) || (cols && rows > (1ull << 34) / cols)) fail("corrupt block shape");
    Matrix<double> m(rows, cols);
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t i = 0; i < rows; ++i) m(i, j) = get<double>();
    return m;
  }
  [[noreturn]] void fail(const std::string& what) const { throw DataError(source_ + ": " + what); }

 private:
  std::istream& in_;
  std::string source_;
};

Matrix<double> column(std::span<const double> v) {
  Matrix<double> m(v.size(), 1);
  std::copy(v.begin(), v.end(), m.values().begin());
  return m;
}

Matrix<double> counts(const std::vector<std::uint64_t>& v) {
  Matrix<double> m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = static_cast<double>(v[i]);
  return m;
}

}  // namespace

void write_draws(std::ostream& out, const PosteriorDraws& d) {
  Writer w(out);
  out.write(magic, sizeof magic);
  w.put<std::uint32_t>(draws_format_version);
  w.str(to_string(d.model));
  w.str(to_string(d.response));
  w.put<std::int32_t>(d.n_chains);
  w.put<std::int32_t>(d.n_keep);
  w.put<std::int32_t>(d.n_burn);
  w.put<std::int32_t>(d.thin);
  w.put(d.scaler.y_min());
  w.put(d.scaler.y_max());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.grid.num_vars()));
  for (std::size_t j = 0; j < d.grid.num_vars(); ++j) w.block("cuts", column(d.grid.cuts(j)));
  w.block("sigma", column(d.sigma));
  w.block("sigma_trace", d.sigma_trace);
  w.block("train_f", d.train_f);
  w.block("test_f", d.test_f);
  w.block("latent_x_mean", d.latent_x_mean);
  w.block("accepted", counts(d.accepted));
  w.block("proposed", counts(d.proposed));
  w.put<std::uint64_t>(d.latent_x.size());
  for (const auto& m : d.latent_x) w.block("latent_x", m);
  w.put<std::uint64_t>(d.ensembles.size());
  for (const auto& ens : d.ensembles) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ens.size()));
    for (const Tree& t : ens) {
      const auto rec = t.to_records();
      w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.size()));
      for (const NodeRecord& r : rec) {
        w.put(r.var);
        w.put(r.cut);
        w.put(r.left);
        w.put(r.right);
        w.put(r.mu);
      }
    }
  }
}

PosteriorDraws read_draws(std::istream& in, const std::string& source) {
  Reader r(in, source);
  char head[sizeof magic];
  in.read(head, sizeof head);
  if (!in || std::memcmp(head, magic, sizeof magic) != 0) r.fail("not a draws file");
  const auto version = r.get<std::uint32_t>();
  if (version != draws_format_version) r.fail("unsupported format version " + std::to_string(version));
  PosteriorDraws d;
  const std::string model = r.str();
  d.model = parse_model_kind(model);
  const std::string response = r.str();
  if (response == "continuous") d.response = ResponseKind::continuous;
  else if (response == "probit") d.response = ResponseKind::probit;
  else r.fail("unknown response kind '" + response + "'");
  d.n_chains = r.get<std::int32_t>();
  d.n_keep = r.get<std::int32_t>();
  d.n_burn = r.get<std::int32_t>();
  d.thin = r.get<std::int32_t>();
  const double y_min = r.get<double>();
  const double y_max = r.get<double>();
  d.scaler = YScaler(y_min, y_max);
  const auto p = r.get<std::uint32_t>();
  std::vector<std::vector<double>> cuts(p);
  for (auto& c : cuts) {
    const Matrix<double> m = r.block("cuts");
    c.assign(m.values().begin(), m.values().end());
  }
  try {
    d.grid = CutpointGrid(std::move(cuts));
  } catch (const std::exception& e) {
    r.fail(std::string("bad grid: ") + e.what());
  }
  const Matrix<double> sigma = r.block("sigma");
  d.sigma.assign(sigma.values().begin(), sigma.values().end());
  d.sigma_trace = r.block("sigma_trace");
  d.train_f = r.block("train_f");
  d.test_f = r.block("test_f");
  d.latent_x_mean = r.block("latent_x_mean");
  for (const char* name : {"accepted", "proposed"}) {
    const Matrix<double> m = r.block(name);
    auto& dst = std::string(name) == "accepted" ? d.accepted : d.proposed;
    for (double v : m.values()) dst.push_back(static_cast<std::uint64_t>(v));
  }
  const auto n_latent = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < n_latent; ++k) d.latent_x.push_back(r.block("latent_x"));
  const auto n_ens = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < n_ens; ++k) {
    std::vector<Tree> ens;
    const auto m = r.get<std::uint32_t>();
    for (std::uint32_t h = 0; h < m; ++h) {
      const auto n_nodes = r.get<std::uint32_t>();
      std::vector<NodeRecord> rec(n_nodes);
      for (auto& nr : rec) {
        nr.var = r.get<std::int32_t>();
        nr.cut = r.get<std::int32_t>();
        nr.left = r.get<std::int32_t>();
        nr.right = r.get<std::int32_t>();
        nr.mu = r.get<double>();
      }
      try {
        ens.push_back(Tree::from_records(rec));
      } catch (const std::exception& e) {
        r.fail(std::string("bad tree: ") + e.what());
      }
    }
    d.ensembles.push_back(std::move(ens));
  }
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes");
  return d;
}

void save_draws(const std::string& path, const PosteriorDraws& draws, const nlohmann::json& sidecar) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "': " + std::strerror(errno));
    write_draws(out, draws);
    if (!out) throw std::runtime_error("write failed for '" + path + "': " + std::strerror(errno));
  }
  std::ofstream side(path + ".json");
  if (!side) throw std::runtime_error("cannot write '" + path + ".json': " + std::strerror(errno));
  side << sidecar.dump(2) << '\n';
}

PosteriorDraws load_draws(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_draws(in, path);
}

nlohmann::json load_sidecar(const std::string& draws_path) {
  std::ifstream in(draws_path + ".json");
  if (!in) throw DataError("cannot open '" + draws_path + ".json'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(draws_path + ".json: " + e.what());
  }
}

}  // namespace mebart
