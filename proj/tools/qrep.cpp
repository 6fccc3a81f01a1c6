// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrep/cli.hpp"

int main(int argc, char** argv) { return qrep::cli_main(argc, argv); }
