#include "artifacts.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "laser/common.hpp"

namespace fs = std::filesystem;

namespace laser::cli {
namespace {

constexpr const char* kStamp = "stamp.txt";
constexpr const char* kTiming = "timing.txt";

}  // namespace

std::string producer(const std::string& stage) {
  if (stage == "data") return "ingest";
  if (stage == "embed" || stage == "group" || stage == "train" || stage == "eval" || stage == "bench" ||
      stage == "synth")
    return stage;
  return "unlearn --name " + stage;
}

bool Workspace::has(const std::string& stage) const { return fs::exists(path(stage, kStamp)); }

std::string Workspace::fresh(const std::string& stage) const {
  fs::remove_all(dir(stage));
  fs::create_directories(dir(stage));
  return dir(stage);
}

std::map<std::string, std::string> Workspace::read_stamp(const std::string& stage) const {
  std::ifstream in(path(stage, kStamp));
  if (!in) {
    throw PrerequisiteError("missing " + dir(stage) + " artifacts; run `laser_cli " + producer(stage) + "` first");
  }
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(in, line);) {
    auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string Workspace::output_hash(const std::string& stage) const {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir(stage))) {
    auto name = e.path().filename().string();
    if (e.is_regular_file() && name != kStamp && name != kTiming) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Fingerprint fp;
  for (const auto& f : files) {
    fp.add(fs::relative(f, dir(stage)).string());
    fp.add_file(f.string());
  }
  return fp.hex();
}

std::string Workspace::require(const std::string& stage) const {
  auto stamp = read_stamp(stage);
  std::string cmd = "`laser_cli " + producer(stage) + "`";
  std::string out = output_hash(stage);
  if (stamp["output"] != out) {
    throw PrerequisiteError(dir(stage) + " was modified after it was written; re-run " + cmd);
  }
  for (const auto& [key, hash] : stamp) {
    if (key.rfind("input.", 0) != 0) continue;
    std::string upstream = key.substr(6);
    if (require(upstream) != hash) {
      throw PrerequisiteError(dir(stage) + " is stale: " + dir(upstream) + " changed since it was built; re-run " +
                              cmd);
    }
  }
  return out;
}

void Workspace::commit(const std::string& stage, const std::string& config_text,
                       const std::vector<std::string>& inputs) const {
  std::map<std::string, std::string> upstream;
  for (const auto& s : inputs) upstream["input." + s] = require(s);
  std::ofstream out(path(stage, kStamp));
  out << "stage=" << stage << '\n';
  out << "config=" << Fingerprint().add(config_text).hex() << '\n';
  for (const auto& [k, v] : upstream) out << k << '=' << v << '\n';
  out << "output=" << output_hash(stage) << '\n';
  if (!out) throw Error("cannot write " + path(stage, kStamp));
}

void Workspace::write_timing(const std::string& stage, double seconds) const {
  std::ofstream out(path(stage, kTiming));
  out << "seconds=" << format_double(seconds) << '\n';
}

double Workspace::read_timing(const std::string& stage) const {
  std::ifstream in(path(stage, kTiming));
  std::string line;
  if (!std::getline(in, line) || line.rfind("seconds=", 0) != 0) return 0.0;
  return std::stod(line.substr(8));
}

}  // namespace laser::cli
