app_name = "hdlo_planning"
app_title = "hDLO planning"
app_publisher = "hdlo_planning contributors"
app_description = "Kinetostatic modelling and motion planning for hybrid deformable linear objects"
app_license = "MIT"

# Commands
# --------
# command name -> handler, resolved lazily by the command-line front end

commands = {
	"statics": "hdlo_planning.cli.cmd_statics",
	"iks": "hdlo_planning.cli.cmd_iks",
	"plan": "hdlo_planning.cli.cmd_plan",
	"rrt": "hdlo_planning.cli.cmd_rrt",
	"gradcheck": "hdlo_planning.cli.cmd_gradcheck",
	"compare": "hdlo_planning.cli.cmd_compare",
}

# Reports
# -------

reports = {
	"compare": "hdlo_planning.report.compare.execute",
}

# Exit codes
# ----------

exit_codes = {
	"success": 0,
	"no_convergence": 1,
	"input_error": 2,
	"goal_unreachable": 3,
}
