"""Task generation, artifacts, checkers and the repo micro-language."""
