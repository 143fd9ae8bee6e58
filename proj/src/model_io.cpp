#include <fstream>
#include <sstream>

#include "tsrkoop/binary_io.hpp"
#include "tsrkoop/edmd.hpp"
#include "tsrkoop/errors.hpp"
#include "tsrkoop/koopman.hpp"

namespace tsrkoop {

namespace {

constexpr const char* kMagic = "KPKM1";
constexpr const char* kMagicPrefix = "KPKM";

void write_matrix(std::ostream& out, const Eigen::MatrixXd& M) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R = M;
  io::write_f64_le(out, std::span<const double>(R.data(), static_cast<std::size_t>(R.size())));
}

// Header lines as key -> remaining tokens; repeated keys keep their order.
struct Header {
  std::vector<std::pair<std::string, std::vector<std::string>>> lines;

  const std::vector<std::string>& get(const std::string& key) const {
    for (const auto& [k, v] : lines) {
      if (k == key) return v;
    }
    throw FormatError("io", "KPKM1 header lacks '" + key + "'");
  }
  std::vector<const std::vector<std::string>*> all(const std::string& key) const {
    std::vector<const std::vector<std::string>*> out;
    for (const auto& [k, v] : lines) {
      if (k == key) out.push_back(&v);
    }
    return out;
  }
  double number(const std::string& key) const {
    const auto& v = get(key);
    if (v.empty()) throw FormatError("io", "KPKM1 header key '" + key + "' has no value");
    return io::parse_double(v[0], "KPKM1 " + key);
  }
  long long integer(const std::string& key) const {
    const auto& v = get(key);
    if (v.empty()) throw FormatError("io", "KPKM1 header key '" + key + "' has no value");
    return io::parse_int(v[0], "KPKM1 " + key);
  }
};

// Parses the text header and positions `payload` at the first payload byte.
struct Reader {
  std::vector<char> bytes;
  Header header;
  std::size_t offset = 0;
  std::size_t cursor = 0;

  explicit Reader(const std::string& path) : bytes(io::read_file(path)) {
    std::size_t pos = 0;
    auto next_line = [&](std::string& line) {
      if (pos >= bytes.size()) return false;
      std::size_t end = pos;
      while (end < bytes.size() && bytes[end] != '\n') ++end;
      line.assign(bytes.data() + pos, end - pos);
      pos = end + 1;
      return true;
    };
    std::string line;
    if (!next_line(line) || line.rfind(kMagicPrefix, 0) != 0) {
      throw FormatError("io", "'" + path + "' is not a KPKM model file (bad magic)");
    }
    if (line != kMagic) {
      throw FormatError("io", "unsupported model container version '" + line + "', expected " +
                                  kMagic);
    }
    bool terminated = false;
    while (next_line(line)) {
      if (line == "data") {
        terminated = true;
        break;
      }
      std::istringstream ls(line);
      std::string key, tok;
      ls >> key;
      std::vector<std::string> vals;
      while (ls >> tok) vals.push_back(tok);
      header.lines.emplace_back(key, std::move(vals));
    }
    if (!terminated) throw FormatError("io", "KPKM1 header is not terminated");
    offset = cursor = std::min(pos, bytes.size());
  }

  void expect_payload(std::size_t doubles) const {
    const std::size_t expected = doubles * sizeof(double);
    const std::size_t actual = bytes.size() - offset;
    if (actual != expected) {
      throw FormatError("io", "KPKM1 payload has " + std::to_string(actual) + " bytes, expected " +
                                  std::to_string(expected));
    }
  }

  Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
    std::vector<double> v(static_cast<std::size_t>(rows * cols));
    std::istringstream in(std::string(bytes.data() + cursor, v.size() * sizeof(double)));
    io::read_f64_le(in, v);
    cursor += v.size() * sizeof(double);
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = v[static_cast<std::size_t>(r * cols + c)];
    }
    return M;
  }
};

void write_layers(std::ostream& out, const char* name, const nn::Mlp& net) {
  out << "layers " << name;
  out << ' ' << net.in_dim();
  for (const auto& l : net.layers) out << ' ' << l.out_dim();
  out << '\n';
}

std::vector<int> layer_dims(const Header& h, const std::string& name) {
  for (const auto* v : h.all("layers")) {
    if (!v->empty() && (*v)[0] == name) {
      std::vector<int> dims;
      for (std::size_t i = 1; i < v->size(); ++i) {
        dims.push_back(static_cast<int>(io::parse_int((*v)[i], "KPKM1 layers")));
      }
      if (dims.size() < 2) throw FormatError("io", "KPKM1 network '" + name + "' has no layers");
      return dims;
    }
  }
  throw FormatError("io", "KPKM1 header lacks network '" + name + "'");
}

std::size_t mlp_doubles(const std::vector<int>& dims) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    n += static_cast<std::size_t>(dims[i]) * static_cast<std::size_t>(dims[i - 1] + 1);
  }
  return n;
}

nn::Mlp read_mlp(Reader& r, const std::vector<int>& dims) {
  nn::Mlp net;
  for (std::size_t i = 1; i < dims.size(); ++i) {
    nn::DenseLayer l;
    l.W = r.matrix(dims[i], dims[i - 1]);
    l.b = r.matrix(dims[i], 1).col(0);
    net.layers.push_back(std::move(l));
  }
  return net;
}

void write_mlp(std::ostream& out, const nn::Mlp& net) {
  for (const auto& l : net.layers) {
    write_matrix(out, l.W);
    write_matrix(out, l.b);
  }
}

void write_attachment_headers(std::ostream& out, std::span<const NamedMatrix> attachments) {
  for (const auto& a : attachments) {
    if (a.name.empty() || a.name.find_first_of(" \t\n") != std::string::npos) {
      throw FormatError("io", "attachment names must be nonempty and free of whitespace");
    }
    out << "attach " << a.name << ' ' << a.value.rows() << ' ' << a.value.cols() << '\n';
  }
}

std::vector<std::pair<std::string, std::pair<long long, long long>>> attachment_shapes(
    const Header& h) {
  std::vector<std::pair<std::string, std::pair<long long, long long>>> out;
  for (const auto* v : h.all("attach")) {
    if (v->size() != 3) throw FormatError("io", "malformed KPKM1 attach line");
    const auto rows = io::parse_int((*v)[1], "KPKM1 attach");
    const auto cols = io::parse_int((*v)[2], "KPKM1 attach");
    if (rows < 0 || cols < 0) throw FormatError("io", "negative KPKM1 attachment shape");
    out.push_back({(*v)[0], {rows, cols}});
  }
  return out;
}

void check_dims(const Header& h) {
  if (h.integer("n") != kStateDim) {
    throw FormatError("io", "KPKM1 state dimension n=" + h.get("n")[0] +
                                " does not match expected n=" + std::to_string(kStateDim));
  }
  if (h.integer("p") != kControlDim) {
    throw FormatError("io", "KPKM1 control dimension p=" + h.get("p")[0] +
                                " does not match expected p=" + std::to_string(kControlDim));
  }
}

void check_method(const Header& h, const std::string& want) {
  const auto& v = h.get("method");
  if (v.empty() || v[0] != want) {
    throw FormatError("io", "model file holds method '" + (v.empty() ? std::string() : v[0]) +
                                "', expected '" + want + "'");
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("io", "cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

void save_model(const KoopmanModel& model, const std::string& path,
                std::span<const NamedMatrix> attachments) {
  model.check_shapes();
  const auto& c = model.config;
  auto out = open_out(path);
  out << kMagic << '\n'
      << "method koopman\n"
      << "n " << kStateDim << '\n'
      << "p " << kControlDim << '\n'
      << "K " << model.latent_dim() << '\n'
      << "control_offset " << io::format_exact(model.control_offset) << '\n'
      << "gate_floor " << io::format_exact(model.gate_floor) << '\n'
      << "u_max " << io::format_exact(model.u_max) << '\n'
      << "alpha " << io::format_exact(c.alpha) << '\n'
      << "beta " << io::format_exact(c.beta) << '\n'
      << "eta " << io::format_exact(c.eta) << '\n'
      << "gamma " << io::format_exact(c.gamma) << '\n'
      << "latent_dim " << c.latent_dim << '\n'
      << "hidden_width " << c.hidden_width << '\n'
      << "hidden_layers " << c.hidden_layers << '\n'
      << "epochs " << c.epochs << '\n'
      << "batch_size " << c.batch_size << '\n'
      << "lr " << io::format_exact(c.adam.lr) << '\n'
      << "adam_beta1 " << io::format_exact(c.adam.beta1) << '\n'
      << "adam_beta2 " << io::format_exact(c.adam.beta2) << '\n'
      << "adam_eps " << io::format_exact(c.adam.eps) << '\n'
      << "final_lr " << io::format_exact(c.final_lr) << '\n'
      << "validation_fraction " << io::format_exact(c.validation_fraction) << '\n'
      << "seed " << c.seed << '\n'
      << "workers " << c.workers << '\n'
      << "cfg_gate_floor " << io::format_exact(c.gate_floor) << '\n'
      << "cfg_u_max " << io::format_exact(c.u_max) << '\n'
      << "hinge_margin " << io::format_exact(c.hinge_margin) << '\n';
  write_layers(out, "phi", model.phi);
  write_layers(out, "gate", model.gate_net);
  write_attachment_headers(out, attachments);
  out << "data\n";
  write_matrix(out, model.A);
  write_matrix(out, model.B);
  write_matrix(out, model.input_offset);
  write_matrix(out, model.input_scale);
  write_mlp(out, model.phi);
  write_mlp(out, model.gate_net);
  for (const auto& a : attachments) write_matrix(out, a.value);
  if (!out) throw IoError("io", "write to '" + path + "' failed");
}

KoopmanModel load_model(const std::string& path, std::vector<NamedMatrix>* attachments) {
  Reader r(path);
  const Header& h = r.header;
  check_method(h, "koopman");
  check_dims(h);
  const auto K = h.integer("K");
  if (K < 1) throw FormatError("io", "KPKM1 latent dimension must be >= 1");
  const auto N = K + kStateDim;

  KoopmanModel m;
  m.control_offset = h.number("control_offset");
  m.gate_floor = h.number("gate_floor");
  m.u_max = h.number("u_max");
  auto& c = m.config;
  c.alpha = h.number("alpha");
  c.beta = h.number("beta");
  c.eta = h.number("eta");
  c.gamma = h.number("gamma");
  c.latent_dim = static_cast<int>(h.integer("latent_dim"));
  c.hidden_width = static_cast<int>(h.integer("hidden_width"));
  c.hidden_layers = static_cast<int>(h.integer("hidden_layers"));
  c.epochs = static_cast<int>(h.integer("epochs"));
  c.batch_size = static_cast<int>(h.integer("batch_size"));
  c.adam.lr = h.number("lr");
  c.adam.beta1 = h.number("adam_beta1");
  c.adam.beta2 = h.number("adam_beta2");
  c.adam.eps = h.number("adam_eps");
  c.final_lr = h.number("final_lr");
  c.validation_fraction = h.number("validation_fraction");
  c.seed = static_cast<std::uint64_t>(std::stoull(h.get("seed").at(0)));
  c.workers = static_cast<int>(h.integer("workers"));
  c.gate_floor = h.number("cfg_gate_floor");
  c.u_max = h.number("cfg_u_max");
  c.hinge_margin = h.number("hinge_margin");

  const auto phi_dims = layer_dims(h, "phi");
  const auto gate_dims = layer_dims(h, "gate");
  const auto shapes = attachment_shapes(h);
  std::size_t total = static_cast<std::size_t>(N * N + N * kControlDim + 2 * kStateDim) +
                      mlp_doubles(phi_dims) + mlp_doubles(gate_dims);
  for (const auto& s : shapes) total += static_cast<std::size_t>(s.second.first * s.second.second);
  r.expect_payload(total);

  m.A = r.matrix(N, N);
  m.B = r.matrix(N, kControlDim);
  m.input_offset = r.matrix(kStateDim, 1).col(0);
  m.input_scale = r.matrix(kStateDim, 1).col(0);
  m.phi = read_mlp(r, phi_dims);
  m.gate_net = read_mlp(r, gate_dims);
  if (attachments != nullptr) attachments->clear();
  for (const auto& s : shapes) {
    auto M = r.matrix(s.second.first, s.second.second);
    if (attachments != nullptr) attachments->push_back({s.first, std::move(M)});
  }
  try {
    m.check_shapes();
  } catch (const ShapeError& e) {
    throw FormatError("io", std::string("inconsistent KPKM1 model: ") + e.what());
  }
  return m;
}

void save_edmd(const EdmdModel& model, const std::string& path) {
  const auto N = model.lifted_dim();
  if (model.A.cols() != N || model.B.rows() != N || model.B.cols() != kControlDim ||
      N != model.dictionary.lifted_dim()) {
    throw ShapeError("edmd", "EDMD model shapes are inconsistent");
  }
  auto out = open_out(path);
  out << kMagic << '\n'
      << "method edmd\n"
      << "n " << kStateDim << '\n'
      << "p " << kControlDim << '\n'
      << "K " << model.dictionary.size() << '\n'
      << "includes_state " << (model.dictionary.includes_state ? 1 : 0) << '\n'
      << "ridge " << io::format_exact(model.ridge) << '\n'
      << "data\n";
  for (const auto& c : model.dictionary.centers) write_matrix(out, c);
  write_matrix(out, model.A);
  write_matrix(out, model.B);
  if (!out) throw IoError("io", "write to '" + path + "' failed");
}

EdmdModel load_edmd(const std::string& path) {
  Reader r(path);
  const Header& h = r.header;
  check_method(h, "edmd");
  check_dims(h);
  const auto K = h.integer("K");
  if (K < 1) throw FormatError("io", "KPKM1 EDMD dictionary must have K >= 1");
  EdmdModel m;
  m.dictionary.includes_state = h.integer("includes_state") != 0;
  m.ridge = h.number("ridge");
  const auto N = K + (m.dictionary.includes_state ? kStateDim : 0);
  r.expect_payload(static_cast<std::size_t>(K * kStateDim + N * N + N * kControlDim));
  for (long long i = 0; i < K; ++i) m.dictionary.centers.push_back(r.matrix(kStateDim, 1).col(0));
  m.A = r.matrix(N, N);
  m.B = r.matrix(N, kControlDim);
  return m;
}

std::string model_method(const std::string& path) {
  Reader r(path);
  const auto& v = r.header.get("method");
  if (v.empty()) throw FormatError("io", "KPKM1 method tag is empty");
  return v[0];
}

}  // namespace tsrkoop
