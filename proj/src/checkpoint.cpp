#include "metasac/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace metasac::nn {

namespace {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_header(std::ostream& os, const char* kind, const std::string& layout) {
  os << "metasac-checkpoint " << kCheckpointVersion << '\n';
  os << "kind " << kind << '\n';
  os << "layout " << layout << '\n';
}

void write_values(std::ostream& os, const TensorMap& values) {
  os << "params " << values.size() << '\n';
  for (const auto& [id, m] : values) {
    os << id << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      os << (i ? " " : "") << fmt_double(m.data()[i]);
    }
    os << '\n';
  }
  if (!os) throw CheckpointError("checkpoint write failed");
}

std::map<std::string, std::string> read_header(std::istream& is, const std::string& expected_kind) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "metasac-checkpoint") {
    throw CheckpointError("not a metasac checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  std::string key, kind;
  if (!(is >> key >> kind) || key != "kind") throw CheckpointError("missing kind line");
  if (kind != expected_kind) throw CheckpointError("expected a " + expected_kind + " checkpoint, got " + kind);
  if (!(is >> key) || key != "layout") throw CheckpointError("missing layout line");
  std::string line;
  std::getline(is, line);
  std::istringstream ls(line);
  std::map<std::string, std::string> layout;
  for (std::string kv; ls >> kv;) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed layout entry: " + kv);
    layout[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return layout;
}

TensorMap read_values(std::istream& is) {
  std::string key;
  std::size_t count = 0;
  if (!(is >> key >> count) || key != "params") throw CheckpointError("missing params line");
  TensorMap values;
  for (std::size_t k = 0; k < count; ++k) {
    std::string id;
    Eigen::Index rows = 0, cols = 0;
    if (!(is >> id >> rows >> cols) || rows <= 0 || cols <= 0) {
      throw CheckpointError("malformed parameter header");
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      std::string tok;
      if (!(is >> tok)) throw CheckpointError("truncated values for " + id);
      m.data()[i] = std::stod(tok);
    }
    values.emplace(id, std::move(m));
  }
  return values;
}

const std::string& field(const std::map<std::string, std::string>& layout, const char* key) {
  auto it = layout.find(key);
  if (it == layout.end()) throw CheckpointError(std::string("layout is missing ") + key);
  return it->second;
}

template <typename Fn>
void with_file_out(const std::filesystem::path& path, Fn fn) {
  std::ofstream os(path);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  fn(os);
}

template <typename Fn>
auto with_file_in(const std::filesystem::path& path, Fn fn) {
  std::ifstream is(path);
  if (!is) throw CheckpointError("cannot open " + path.string());
  return fn(is);
}

}  // namespace

void write_policy(std::ostream& os, const PolicyParams& policy) {
  const auto& l = policy.layout;
  std::ostringstream layout;
  layout << "state_dim=" << l.state_dim << " action_dim=" << l.action_dim
         << " hidden_width=" << l.hidden_width << " hidden_layers=" << l.hidden_layers
         << " action_bound=" << fmt_double(l.action_bound);
  write_header(os, "policy", layout.str());
  write_values(os, policy.values);
}

void write_critic(std::ostream& os, const CriticParams& critic) {
  const auto& l = critic.layout;
  std::ostringstream layout;
  layout << "state_dim=" << l.state_dim << " action_dim=" << l.action_dim
         << " hidden_width=" << l.hidden_width << " hidden_layers=" << l.hidden_layers
         << " twin=" << (l.twin ? 1 : 0);
  write_header(os, "critic", layout.str());
  write_values(os, critic.values);
}

PolicyParams read_policy(std::istream& is) {
  auto h = read_header(is, "policy");
  PolicyParams p;
  p.layout.state_dim = std::stoi(field(h, "state_dim"));
  p.layout.action_dim = std::stoi(field(h, "action_dim"));
  p.layout.hidden_width = std::stoi(field(h, "hidden_width"));
  p.layout.hidden_layers = std::stoi(field(h, "hidden_layers"));
  p.layout.action_bound = std::stod(field(h, "action_bound"));
  p.values = read_values(is);
  return p;
}

CriticParams read_critic(std::istream& is) {
  auto h = read_header(is, "critic");
  CriticParams c;
  c.layout.state_dim = std::stoi(field(h, "state_dim"));
  c.layout.action_dim = std::stoi(field(h, "action_dim"));
  c.layout.hidden_width = std::stoi(field(h, "hidden_width"));
  c.layout.hidden_layers = std::stoi(field(h, "hidden_layers"));
  c.layout.twin = field(h, "twin") == "1";
  c.values = read_values(is);
  return c;
}

void save_policy(const std::filesystem::path& path, const PolicyParams& policy) {
  with_file_out(path, [&](std::ostream& os) { write_policy(os, policy); });
}

PolicyParams load_policy(const std::filesystem::path& path) {
  return with_file_in(path, [](std::istream& is) { return read_policy(is); });
}

void save_critic(const std::filesystem::path& path, const CriticParams& critic) {
  with_file_out(path, [&](std::ostream& os) { write_critic(os, critic); });
}

CriticParams load_critic(const std::filesystem::path& path) {
  return with_file_in(path, [](std::istream& is) { return read_critic(is); });
}

}  // namespace metasac::nn
