#include "emoser/cli.hpp"

int main(int argc, char** argv) { return emoser::cli::dispatch(argc, argv); }
