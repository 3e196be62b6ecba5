#pragma once

// Command-line entry point. Verbs: train, ablate, adistance,
// export-embeddings, gen-data. Exit codes: 0 success, 1 error,
// 2 non-finite-loss abort (diagnostic.json written to the output directory).

namespace cat {

int run_cli(int argc, char** argv);

}  // namespace cat
