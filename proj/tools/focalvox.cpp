// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#include <iostream>

#include "app.hpp"

int main(int argc, char** argv) { return focalvox::cli::run(argc, argv, std::cout, std::cerr); }
