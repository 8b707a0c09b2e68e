#include "priorflow/cli.hpp"

int main(int argc, char** argv) { return priorflow::cli::run(argc, argv); }
