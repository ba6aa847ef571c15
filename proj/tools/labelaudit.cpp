#include "labelaudit/cli.hpp"

int main(int argc, char** argv) { return labelaudit::cli::dispatch(argc, argv); }
