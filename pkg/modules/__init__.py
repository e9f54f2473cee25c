# DSG Referring Relationships modules
# core / data / reports / utils
