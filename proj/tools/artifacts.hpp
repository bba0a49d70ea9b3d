#pragma once

#include <map>
#include <string>
#include <vector>

namespace laser::cli {

/// Artifact tree under --out. Each stage directory holds a stamp.txt with
/// the hash of its config subset, the output hash of every stage it read,
/// and the hash of its own files. Downstream commands re-check the whole
/// lineage, so a re-ingest invalidates the plan, chains and reports built
/// on top of the old data.
class Workspace {
 public:
  explicit Workspace(std::string root) : root_(std::move(root)) {}

  const std::string& root() const { return root_; }
  std::string dir(const std::string& stage) const { return root_ + "/" + stage; }
  std::string path(const std::string& stage, const std::string& file) const { return dir(stage) + "/" + file; }
  bool has(const std::string& stage) const;

  /// Creates an empty stage directory, dropping any previous contents.
  std::string fresh(const std::string& stage) const;

  /// Output hash of `stage` after checking it and its lineage are current.
  /// Throws PrerequisiteError naming the command to run otherwise.
  std::string require(const std::string& stage) const;

  /// Records a finished stage. Every regular file in the directory except
  /// stamp.txt and timing.txt is hashed.
  void commit(const std::string& stage, const std::string& config_text, const std::vector<std::string>& inputs) const;

  void write_timing(const std::string& stage, double seconds) const;
  double read_timing(const std::string& stage) const;

 private:
  std::map<std::string, std::string> read_stamp(const std::string& stage) const;
  std::string output_hash(const std::string& stage) const;

  std::string root_;
};

/// Command that produces a stage (stage names and commands mostly agree).
std::string producer(const std::string& stage);

}  // namespace laser::cli
