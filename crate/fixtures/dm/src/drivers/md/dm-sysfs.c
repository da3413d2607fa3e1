#include "dm-core.h"

struct dm_sysfs_attr {
	const char *name;
	unsigned short mode;
	long (*show)(struct mapped_device *md, char *buf);
};

static long dm_attr_name_show(struct mapped_device *md, char *buf)
{
	return sprintf(buf, "%s\n", md->name);
}

static long dm_attr_suspended_show(struct mapped_device *md, char *buf)
{
	return sprintf(buf, "%d\n", test_bit(DMF_SUSPENDED, &md->flags));
}

static struct dm_sysfs_attr dm_attr_name = { "name", 0444, dm_attr_name_show };
static struct dm_sysfs_attr dm_attr_suspended = { "suspended", 0444, dm_attr_suspended_show };
