"""Instance, field and ontology files."""
