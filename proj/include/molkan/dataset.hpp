#pragma once

// CSV dataset ingestion: header with a required `smiles` column, one or more
// numeric label columns, empty cells meaning missing labels. Unparseable
// SMILES rows are skipped and counted, never fatal.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "molkan/smiles.hpp"
#include "molkan/training.hpp"

namespace molkan {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

// RFC-4180-ish: quoted fields may contain commas and doubled quotes
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    size_t b = s.find_last_not_of(" \t");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline std::string lower(std::string s) {
    for (char& c : s) c = char(tolower(c));
    return s;
}

inline bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

}  // namespace detail

// label_columns empty => auto-detect: every column other than the SMILES
// column whose non-empty cells all parse as numbers (and, for
// classification, are all 0/1). Explicit names override auto-detection.
// smiles_column covers datasets that name the column differently (BACE ships
// its SMILES under `mol`).
inline Dataset load_csv_dataset(const std::string& path, TaskKind task,
                                std::vector<std::string> label_columns = {},
                                const std::string& smiles_column = "smiles") {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty dataset file: " + path);
    std::vector<std::string> header = detail::split_csv_line(line);
    int smiles_col = -1;
    for (size_t c = 0; c < header.size(); ++c) {
        if (detail::lower(detail::trim(header[c])) == detail::lower(smiles_column)) {
            smiles_col = int(c);
            break;
        }
    }
    if (smiles_col < 0)
        throw ConfigError("dataset header has no `" + smiles_column + "` column: " + path);

    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        rows.push_back(detail::split_csv_line(line));
    }

    // resolve label columns
    std::vector<int> label_idx;
    if (!label_columns.empty()) {
        for (const auto& name : label_columns) {
            int found = -1;
            for (size_t c = 0; c < header.size(); ++c)
                if (detail::trim(header[c]) == name) found = int(c);
            if (found < 0) throw ConfigError("label column not found: " + name);
            label_idx.push_back(found);
        }
    } else {
        for (size_t c = 0; c < header.size(); ++c) {
            if (int(c) == smiles_col) continue;
            bool numeric = true, binary = true, any = false;
            for (const auto& row : rows) {
                if (c >= row.size()) continue;
                const std::string cell = detail::trim(row[c]);
                if (cell.empty()) continue;
                double v;
                if (!detail::parse_double(cell, v)) {
                    numeric = false;
                    break;
                }
                any = true;
                if (v != 0.0 && v != 1.0) binary = false;
            }
            if (!numeric || !any) continue;
            if (task == TaskKind::classification && !binary) continue;
            label_idx.push_back(int(c));
        }
        if (label_idx.empty())
            throw ConfigError("no usable label columns detected in " + path +
                              "; pass label_columns explicitly");
    }

    Dataset data;
    data.task = task;
    data.n_tasks = int(label_idx.size());
    for (int c : label_idx) data.task_names.push_back(detail::trim(header[size_t(c)]));

    for (const auto& row : rows) {
        ++data.stats.rows_read;
        if (smiles_col >= int(row.size())) {
            ++data.stats.skipped;
            ++data.stats.skip_reasons["missing_smiles_cell"];
            continue;
        }
        const std::string smi = detail::trim(row[size_t(smiles_col)]);
        Molecule mol;
        try {
            mol.graph = parse_smiles(smi);
        } catch (const ParseError&) {
            ++data.stats.skipped;
            ++data.stats.skip_reasons["smiles_parse_error"];
            continue;
        }
        mol.features = featurize(mol.graph);
        mol.scaffold = murcko_scaffold(mol.graph);
        mol.labels.assign(size_t(data.n_tasks), 0.0);
        mol.mask.assign(size_t(data.n_tasks), 0.0);
        for (int t = 0; t < data.n_tasks; ++t) {
            if (label_idx[size_t(t)] >= int(row.size())) continue;
            double v;
            if (detail::parse_double(row[size_t(label_idx[size_t(t)])], v)) {
                mol.labels[size_t(t)] = v;
                mol.mask[size_t(t)] = 1.0;
            }
        }
        data.molecules.push_back(std::move(mol));
        ++data.stats.molecules;
    }
    if (data.molecules.empty()) throw ConfigError("no parseable molecules in " + path);
    return data;
}

}  // namespace molkan
