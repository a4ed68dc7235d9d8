"""Use case modeling workbench: model core, PlantUML tooling, LLM pipeline, evaluation."""

__version__ = "0.1.0"
