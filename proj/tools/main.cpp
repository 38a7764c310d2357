// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcbf/cli.hpp"

int main(int argc, char** argv) { return gcbf::run_cli(argc, argv); }
