#pragma once

#include <map>
#include <string>
#include <vector>

#include "adstm/grid.hpp"

namespace adstm {

/// ASCII PGM (P2) with the value range recorded in a comment line, so the
/// image is both viewable and exactly invertible.
void write_pgm(const std::string& path, const Field& field);

/// Comma-separated matrix/table writers; plain text, diffable.
void write_csv_matrix(const std::string& path, const Eigen::MatrixXd& m);
void write_csv_table(const std::string& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows);

/// Line-based key=value config (# starts a comment). Later keys win.
std::map<std::string, std::string> parse_config_text(const std::string& content);
std::map<std::string, std::string> read_config_file(const std::string& path);

}  // namespace adstm
