// SPDX-License-Identifier: Apache-2.0

#include "dcasenet/cli.hpp"

int main(int argc, char** argv) { return dcasenet::run_cli(argc, argv); }
