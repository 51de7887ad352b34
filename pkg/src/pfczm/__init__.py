"""Phase-field bulk fracture coupled with cohesive interface damage in 2D."""

__version__ = "0.1.0"
