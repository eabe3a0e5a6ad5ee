#include "cfpanel/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "cfpanel/error.hpp"

namespace cfpanel {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV record. Double-quoted fields may contain commas and "".
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(trim(field));
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path.string());
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_record(line);
    if (!have_header) {
      if (!fields.empty() && fields[0].starts_with("\xEF\xBB\xBF")) fields[0].erase(0, 3);
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  return table;
}

std::unordered_map<std::string, std::size_t> column_index(const CsvTable& table,
                                                          const std::filesystem::path& path) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (!index.emplace(table.header[c], c).second) {
      throw InputError("schema error: duplicate column '" + table.header[c] + "' in " + path.string());
    }
  }
  return index;
}

std::size_t require_column(const std::unordered_map<std::string, std::size_t>& index,
                           const std::string& name, const std::filesystem::path& path) {
  const auto it = index.find(name);
  if (it == index.end()) {
    throw InputError("schema error: missing column '" + name + "' in " + path.string());
  }
  return it->second;
}

// Number of consecutive columns prefix1, prefix2, ... present in the header.
std::size_t count_prefixed(const std::unordered_map<std::string, std::size_t>& index,
                           const std::string& prefix) {
  std::size_t d = 0;
  while (index.count(prefix + std::to_string(d + 1))) ++d;
  return d;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column,
                    const std::filesystem::path& path) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last) {
    throw InputError("parse error: row " + std::to_string(row) + ", column '" + column +
                     "': not a number: '" + cell + "' in " + path.string());
  }
  return value;
}

const std::string& cell_at(const std::vector<std::string>& row, std::size_t col) {
  static const std::string empty;
  return col < row.size() ? row[col] : empty;
}

}  // namespace

std::size_t PanelDataset::n2() const {
  return static_cast<std::size_t>(
      std::count_if(units.begin(), units.end(), [](const PanelUnit& u) { return u.stays(); }));
}

PanelSchema PanelSchema::standard(std::size_t dim) {
  PanelSchema s;
  for (std::size_t k = 1; k <= dim; ++k) {
    s.z1.push_back("z1_" + std::to_string(k));
    s.z2.push_back("z2_" + std::to_string(k));
  }
  return s;
}

RefreshmentSchema RefreshmentSchema::standard(std::size_t dim) {
  RefreshmentSchema s;
  for (std::size_t k = 1; k <= dim; ++k) s.z2.push_back("z2_" + std::to_string(k));
  return s;
}

PanelDataset load_panel_csv(const std::filesystem::path& path,
                            const std::optional<PanelSchema>& schema_opt) {
  const CsvTable table = read_csv(path);
  const auto index = column_index(table, path);
  PanelSchema schema;
  if (schema_opt) {
    schema = *schema_opt;
  } else {
    const std::size_t d = count_prefixed(index, "z1_");
    if (d == 0) throw InputError("schema error: no z1_1 column in " + path.string());
    schema = PanelSchema::standard(d);
  }
  if (schema.z1.empty() || schema.z1.size() != schema.z2.size()) {
    throw InputError("schema error: z1 and z2 column lists must be nonempty and of equal length");
  }
  const std::size_t d = schema.dim();
  const std::size_t id_col = require_column(index, schema.id, path);
  const std::size_t w_col = require_column(index, schema.stay, path);
  std::vector<std::size_t> z1_cols, z2_cols;
  for (const auto& name : schema.z1) z1_cols.push_back(require_column(index, name, path));
  for (const auto& name : schema.z2) z2_cols.push_back(require_column(index, name, path));

  PanelDataset panel;
  panel.dim = d;
  panel.units.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t row_no = r + 1;
    PanelUnit unit;
    unit.id = cell_at(row, id_col);
    const std::string& w = cell_at(row, w_col);
    bool stays = false;
    if (w == "1") {
      stays = true;
    } else if (w != "0") {
      throw InputError("parse error: row " + std::to_string(row_no) + ", column '" + schema.stay +
                       "': stay flag must be 0 or 1, got '" + w + "' in " + path.string());
    }
    unit.z1.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
      const std::string& cell = cell_at(row, z1_cols[k]);
      if (cell.empty()) {
        throw InputError("consistency error: row " + std::to_string(row_no) + " has a blank " +
                         schema.z1[k] + "; first-wave values must be complete");
      }
      unit.z1[k] = parse_number(cell, row_no, schema.z1[k], path);
    }
    std::size_t blanks = 0;
    for (std::size_t k = 0; k < d; ++k) blanks += cell_at(row, z2_cols[k]).empty() ? 1 : 0;
    if (stays) {
      if (blanks != 0) {
        throw InputError("consistency error: row " + std::to_string(row_no) + " (id '" + unit.id +
                         "') has w=1 but blank second-wave values");
      }
      std::vector<double> z2(d);
      for (std::size_t k = 0; k < d; ++k) {
        z2[k] = parse_number(cell_at(row, z2_cols[k]), row_no, schema.z2[k], path);
      }
      unit.z2 = std::move(z2);
    } else if (blanks != d) {
      throw InputError("consistency error: row " + std::to_string(row_no) + " (id '" + unit.id +
                       "') has w=0 but second-wave values present");
    }
    panel.units.push_back(std::move(unit));
  }
  return panel;
}

RefreshmentDataset load_refreshment_csv(const std::filesystem::path& path,
                                        const std::optional<RefreshmentSchema>& schema_opt) {
  const CsvTable table = read_csv(path);
  if (table.header.empty() || table.rows.empty()) throw InputError("refreshment sample empty: " + path.string());
  const auto index = column_index(table, path);
  RefreshmentSchema schema;
  if (schema_opt) {
    schema = *schema_opt;
    const std::size_t present = count_prefixed(index, "z2_");
    if (present != schema.dim()) {
      throw InputError("schema error: refreshment file has " + std::to_string(present) +
                       " z2 columns but the schema declares d=" + std::to_string(schema.dim()));
    }
  } else {
    const std::size_t d = count_prefixed(index, "z2_");
    if (d == 0) throw InputError("schema error: no z2_1 column in " + path.string());
    schema = RefreshmentSchema::standard(d);
  }
  std::vector<std::size_t> cols;
  for (const auto& name : schema.z2) cols.push_back(require_column(index, name, path));

  RefreshmentDataset out{PointSet(schema.dim())};
  out.rows.reserve(table.rows.size());
  std::vector<double> point(schema.dim());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size()) {
      throw InputError("schema error: row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                       " fields, header has " + std::to_string(table.header.size()));
    }
    for (std::size_t k = 0; k < schema.dim(); ++k) {
      point[k] = parse_number(cell_at(row, cols[k]), r + 1, schema.z2[k], path);
    }
    out.rows.push_back(point);
  }
  return out;
}

ValidatedData validate(PanelDataset panel, RefreshmentDataset refreshment) {
  const std::size_t d = panel.dim;
  if (panel.units.empty()) throw InputError("panel is empty");
  if (refreshment.rows.empty()) throw InputError("refreshment sample empty");
  if (refreshment.rows.dim() != d) {
    throw InputError("dimension error: panel has d=" + std::to_string(d) + ", refreshment has d=" +
                     std::to_string(refreshment.rows.dim()));
  }
  for (std::size_t i = 0; i < panel.units.size(); ++i) {
    const PanelUnit& u = panel.units[i];
    if (u.z1.size() != d || (u.z2 && u.z2->size() != d)) {
      throw InputError("dimension error: panel row " + std::to_string(i + 1));
    }
    for (std::size_t k = 0; k < d; ++k) {
      if (!std::isfinite(u.z1[k])) {
        throw InputError("finiteness error: panel row " + std::to_string(i + 1) + ", z1_" + std::to_string(k + 1));
      }
      if (u.z2 && !std::isfinite((*u.z2)[k])) {
        throw InputError("finiteness error: panel row " + std::to_string(i + 1) + ", z2_" + std::to_string(k + 1));
      }
    }
  }
  for (std::size_t i = 0; i < refreshment.rows.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      if (!std::isfinite(refreshment.rows[i][k])) {
        throw InputError("finiteness error: refreshment row " + std::to_string(i + 1) + ", z2_" +
                         std::to_string(k + 1));
      }
    }
  }
  ValidatedData v;
  v.dim = d;
  v.n1 = panel.n1();
  v.n2 = panel.n2();
  v.nr = refreshment.rows.size();
  v.attrition_rate = 1.0 - static_cast<double>(v.n2) / static_cast<double>(v.n1);
  v.panel = std::move(panel);
  v.refreshment = std::move(refreshment);
  return v;
}

PointSet ValidatedData::first_wave() const {
  PointSet out(dim);
  out.reserve(n1);
  for (const auto& u : panel.units) out.push_back(u.z1);
  return out;
}

PointSet ValidatedData::stayers_z1() const {
  PointSet out(dim);
  out.reserve(n2);
  for (const auto& u : panel.units) {
    if (u.stays()) out.push_back(u.z1);
  }
  return out;
}

PointSet ValidatedData::stayers_z2() const {
  PointSet out(dim);
  out.reserve(n2);
  for (const auto& u : panel.units) {
    if (u.stays()) out.push_back(*u.z2);
  }
  return out;
}

PointSet ValidatedData::stayers_joint() const {
  PointSet out(2 * dim);
  out.reserve(n2);
  std::vector<double> joint(2 * dim);
  for (const auto& u : panel.units) {
    if (!u.stays()) continue;
    std::copy(u.z1.begin(), u.z1.end(), joint.begin());
    std::copy(u.z2->begin(), u.z2->end(), joint.begin() + static_cast<std::ptrdiff_t>(dim));
    out.push_back(joint);
  }
  return out;
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw InputError("cannot format number");
  return std::string(buf, ptr);
}

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write file: " + path.string());
  return out;
}

}  // namespace

void write_panel_csv(const PanelDataset& panel, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  const PanelSchema s = PanelSchema::standard(panel.dim);
  out << s.id << ',' << s.stay;
  for (const auto& c : s.z1) out << ',' << c;
  for (const auto& c : s.z2) out << ',' << c;
  out << '\n';
  for (const auto& u : panel.units) {
    out << csv_quote(u.id) << ',' << (u.stays() ? '1' : '0');
    for (double v : u.z1) out << ',' << format_double(v);
    for (std::size_t k = 0; k < panel.dim; ++k) {
      out << ',';
      if (u.z2) out << format_double((*u.z2)[k]);
    }
    out << '\n';
  }
}

void write_refreshment_csv(const RefreshmentDataset& refreshment, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  const auto s = RefreshmentSchema::standard(refreshment.rows.dim());
  for (std::size_t k = 0; k < s.z2.size(); ++k) out << (k ? "," : "") << s.z2[k];
  out << '\n';
  for (std::size_t i = 0; i < refreshment.rows.size(); ++i) {
    const auto row = refreshment.rows[i];
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << format_double(row[k]);
    out << '\n';
  }
}

}  // namespace cfpanel
