"""File-protocol companions to the reqrel package: CoNLL-U parse
export and a transformer requirement-pair classifier. Files are the
only interface; these tools never talk to the HTTP service."""
