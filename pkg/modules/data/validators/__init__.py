# JSON-lines scene record validation
