# Graph-based document layout analysis
