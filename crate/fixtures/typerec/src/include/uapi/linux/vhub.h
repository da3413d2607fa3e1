#ifndef _UAPI_LINUX_VHUB_H
#define _UAPI_LINUX_VHUB_H

#include <linux/types.h>

#define VHUB_MAX_DEVICES 16

struct vhub_port_addr {
	__u8 bus;
	__u8 port;
	__u16 speed;
};

struct vhub_dev_info {
	__u32 id;
	__u32 status;
	struct vhub_port_addr addr;
};

struct vhub_dev_list {
	__u32 count;
	struct vhub_dev_info devices[];
};

#define VHUB_IOC_MAGIC 'V'

#define VHUB_GET_DEVICES	_IOWR(VHUB_IOC_MAGIC, 1, struct vhub_dev_list)
#define VHUB_ATTACH		_IOW(VHUB_IOC_MAGIC, 2, struct vhub_dev_info)
#define VHUB_DETACH		_IOW(VHUB_IOC_MAGIC, 3, __u32)
#define VHUB_RESET		_IO(VHUB_IOC_MAGIC, 4)

#endif
