#include "qsciml/cli.hpp"

int main(int argc, char** argv) { return qsciml::cli::run(argc, argv); }
