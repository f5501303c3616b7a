#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qsa {

/// Deterministic CSV emission: doubles printed with %.17g so runs are
/// byte-identical given identical inputs.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  CsvWriter& field(const std::string& s);
  CsvWriter& field(double v);
  CsvWriter& field(long long v);
  void end_row();

  static std::string format(double v);

 private:
  std::ostream& os_;
  bool row_started_ = false;
};

/// Minimal reader for the library's own output (verify re-checks manifests).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);

}  // namespace qsa
