#include "diskcd/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "diskcd/error.hpp"

namespace diskcd {

namespace {
constexpr const char* kMagic = "diskcd-checkpoint 1";
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) fail(Err::Io, "cannot open checkpoint for writing: " + path);
  out << kMagic << "\n";
  out << "meta " << (ckpt.meta.empty() ? "{}" : ckpt.meta) << "\n";
  char buf[64];
  for (const auto& [name, t] : ckpt.params) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
      fail(Err::Io, "checkpoint parameter name is empty or contains whitespace: '" + name + "'");
    out << "param " << name << " " << t.ndim();
    for (int64_t d : t.shape) out << " " << d;
    out << "\n";
    for (int64_t i = 0; i < t.numel(); ++i) {
      std::snprintf(buf, sizeof buf, "%a", t.at(i));
      out << buf << (i + 1 == t.numel() ? "" : " ");
    }
    out << "\n";
  }
  out << "end\n";
  if (!out) fail(Err::Io, "write failed for checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::Io, "cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    fail(Err::Io, "not a checkpoint file (bad magic): " + path);

  Checkpoint ckpt;
  bool saw_end = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      saw_end = true;
      break;
    }
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::getline(ls, ckpt.meta);
      if (!ckpt.meta.empty() && ckpt.meta.front() == ' ') ckpt.meta.erase(0, 1);
    } else if (tag == "param") {
      std::string name;
      int nd = -1;
      ls >> name >> nd;
      if (!ls || nd < 0 || nd > 2) fail(Err::Io, "malformed param header in checkpoint: " + line);
      std::vector<int64_t> shape(static_cast<size_t>(nd));
      for (auto& d : shape) ls >> d;
      if (!ls) fail(Err::Io, "malformed param shape in checkpoint: " + line);
      Tensor t = Tensor::zeros(std::move(shape));
      if (!std::getline(in, line)) fail(Err::Io, "checkpoint truncated inside parameter " + name);
      const char* p = line.c_str();
      for (int64_t i = 0; i < t.numel(); ++i) {
        char* endp = nullptr;
        t.at(i) = std::strtod(p, &endp);
        if (endp == p) fail(Err::Io, "bad value in checkpoint parameter " + name);
        p = endp;
      }
      ckpt.params.emplace_back(std::move(name), std::move(t));
    } else {
      fail(Err::Io, "unknown checkpoint line: " + line);
    }
  }
  if (!saw_end) fail(Err::Io, "checkpoint truncated (missing end): " + path);
  return ckpt;
}

}  // namespace diskcd
