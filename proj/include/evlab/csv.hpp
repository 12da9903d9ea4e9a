#ifndef EVLAB_CSV_HPP
#define EVLAB_CSV_HPP

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "evlab/config.hpp"

namespace evlab {

/// Minimal deterministic CSV: fixed column order, '.' decimal separator,
/// numbers at 17 significant digits, every row newline-terminated.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  explicit CsvTable(std::vector<std::string> cols) : columns(std::move(cols)) {}

  class RowBuilder {
   public:
    explicit RowBuilder(CsvTable& t) : table_(t) {}
    RowBuilder& add(const std::string& v) {
      cells_.push_back(v);
      return *this;
    }
    RowBuilder& add(double v) { return add(format_number(v)); }
    RowBuilder& add(int v) { return add(std::to_string(v)); }
    ~RowBuilder() { table_.push_row(std::move(cells_)); }

   private:
    CsvTable& table_;
    std::vector<std::string> cells_;
  };

  RowBuilder row() { return RowBuilder(*this); }

  void push_row(std::vector<std::string> cells) {
    if (cells.size() != columns.size())
      throw std::invalid_argument("csv row has wrong number of cells");
    rows.push_back(std::move(cells));
  }

  void write(std::ostream& out) const {
    auto line = [&out](const std::vector<std::string>& cells) {
      for (size_t i = 0; i < cells.size(); ++i) {
        if (i) out << ',';
        out << cells[i];
      }
      out << '\n';
    };
    line(columns);
    for (const auto& r : rows) line(r);
  }

  std::string str() const {
    std::ostringstream out;
    write(out);
    return out.str();
  }
};

}  // namespace evlab

#endif
