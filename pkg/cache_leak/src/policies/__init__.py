# 替换策略插件：每个模块提供 NAME、check_assoc(assoc)、permute(base, target)
