#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "prognos/common.hpp"

namespace prognos::binio {

// All on-disk numbers are little-endian; reals are 64-bit except embedding
// payloads, which are 32-bit.

void write_u32(std::ostream& out, std::uint32_t v);
void write_f64(std::ostream& out, double v);
void write_f32(std::ostream& out, float v);
void write_string(std::ostream& out, const std::string& s);
void write_vector(std::ostream& out, const Eigen::VectorXd& v);
void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);  // row-major order

std::uint32_t read_u32(std::istream& in);
double read_f64(std::istream& in);
float read_f32(std::istream& in);
std::string read_string(std::istream& in);
Eigen::VectorXd read_vector(std::istream& in);
Eigen::MatrixXd read_matrix(std::istream& in);

void write_magic(std::ostream& out, const char (&magic)[9]);
void expect_magic(std::istream& in, const char (&magic)[9], const std::string& what);

}  // namespace prognos::binio
