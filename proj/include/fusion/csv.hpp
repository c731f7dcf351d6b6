#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "fusion/config.hpp"
#include "fusion/dataset.hpp"

namespace fusion {

struct CsvDataset {
  Dataset data;
  std::vector<std::string> columns;        // header names of z_1..z_d
  std::string source_column;
  std::vector<std::string> source_labels;  // entry s-1 is the label mapped to source s
};

// Header row required. Without an explicit label list, distinct labels are
// sorted (numerically when all are numbers) and numbered from 1. When
// mapping.columns is empty every column other than the source is used.
CsvDataset read_csv(std::istream& in, const DataMapping& mapping);
CsvDataset ingest_csv(const std::string& path, const DataMapping& mapping);

// Values written with 17 significant digits so they re-read exactly.
void write_csv(std::ostream& out, const CsvDataset& csv);

}  // namespace fusion
