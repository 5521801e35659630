// SPDX-License-Identifier: Apache-2.0

#include "drcf/cli.hpp"

int main(int argc, char** argv) { return drcf::cli::run(argc, argv); }
